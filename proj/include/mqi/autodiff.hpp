#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mqi/kernels.hpp"
#include "mqi/tensor.hpp"

// Reverse-mode tape. Ops append records as they execute, so the record list
// is topologically ordered by construction; backward replays it once in
// reverse. Saved activations live in the tape's value store and are
// referenced by node id from each record's vjp closure.

namespace mqi {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(value.shape()),
          adam_m(value.shape()),
          adam_v(value.shape()) {}

    void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), T(0)); }
};

template <typename T>
class Tape;

template <typename T>
struct Val {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Tensor<T>& tensor() const { return tape->value(id); }
    const std::vector<int>& shape() const { return tensor().shape(); }
};

template <typename T>
class Tape {
public:
    struct Record {
        const char* kind;
        std::vector<int> inputs;
        int output;
        std::function<void(Tape&)> vjp;
    };

    // Leaf that never receives a gradient.
    Val<T> constant(Tensor<T> v) { return {this, push_value(std::move(v))}; }

    // Grad-tracked leaf; gradient retrievable via grad_of after backward.
    Val<T> input(Tensor<T> v) {
        const int id = push_value(std::move(v));
        tracked_.push_back(id);
        return {this, id};
    }

    // Leaf bound to a Parameter; backward accumulates into p.grad.
    Val<T> param(Parameter<T>& p) {
        const int id = push_value(p.value);
        bound_.emplace_back(id, &p);
        return {this, id};
    }

    const Tensor<T>& value(int id) const { return values_[static_cast<size_t>(id)]; }
    long long num_records() const { return static_cast<long long>(records_.size()); }

    int push_value(Tensor<T> v) {
        values_.push_back(std::move(v));
        return static_cast<int>(values_.size()) - 1;
    }

    void push_record(const char* kind, std::vector<int> inputs, int output, std::function<void(Tape&)> vjp) {
        records_.push_back({kind, std::move(inputs), output, std::move(vjp)});
    }

    // Lazily allocated gradient slot; untouched nodes stay unallocated.
    Tensor<T>& grad(int id) {
        auto& g = grads_[static_cast<size_t>(id)];
        if (!g) g = std::make_unique<Tensor<T>>(values_[static_cast<size_t>(id)].shape());
        return *g;
    }

    bool has_grad(int id) const { return grads_[static_cast<size_t>(id)] != nullptr; }

    void backward(const Val<T>& loss) {
        check(loss.tape == this, "backward: loss from another tape");
        check(value(loss.id).numel() == 1, "backward: loss must be scalar");
        grads_.clear();
        grads_.resize(values_.size());
        grad(loss.id)[0] = T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it)
            if (has_grad(it->output)) it->vjp(*this);
        for (auto& [id, p] : bound_) {
            if (!has_grad(id)) continue;
            const Tensor<T>& g = grad(id);
            for (long long i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
        }
    }

    // Gradient of a tracked input leaf from the latest backward pass.
    Tensor<T> grad_of(const Val<T>& v) {
        if (static_cast<size_t>(v.id) < grads_.size() && has_grad(v.id)) return grad(v.id);
        return Tensor<T>(value(v.id).shape());
    }

    void clear() {
        values_.clear();
        grads_.clear();
        records_.clear();
        bound_.clear();
        tracked_.clear();
    }

private:
    std::vector<Tensor<T>> values_;
    std::vector<std::unique_ptr<Tensor<T>>> grads_;
    std::vector<Record> records_;
    std::vector<std::pair<int, Parameter<T>*>> bound_;
    std::vector<int> tracked_;
};

// ---------------------------------------------------------------------------
// tape op wrappers
// ---------------------------------------------------------------------------

template <typename T>
Val<T> elementwise(EwKind kind, Val<T> a, Val<T> b) {
    check(a.tape == b.tape, "elementwise: operands from different tapes");
    Tape<T>& t = *a.tape;
    const int out = t.push_value(elementwise(kind, t.value(a.id), t.value(b.id)));
    const char* name = kind == EwKind::Add ? "add" : kind == EwKind::Sub ? "sub" : "mul";
    t.push_record(name, {a.id, b.id}, out, [kind, ai = a.id, bi = b.id, out](Tape<T>& tp) {
        elementwise_backward(kind, tp.grad(out), tp.value(ai), tp.value(bi), tp.grad(ai), tp.grad(bi));
    });
    return {&t, out};
}

template <typename T>
Val<T> operator+(Val<T> a, Val<T> b) { return elementwise(EwKind::Add, a, b); }
template <typename T>
Val<T> operator-(Val<T> a, Val<T> b) { return elementwise(EwKind::Sub, a, b); }
template <typename T>
Val<T> operator*(Val<T> a, Val<T> b) { return elementwise(EwKind::Mul, a, b); }

template <typename T>
Val<T> matmul(Val<T> a, Val<T> b) {
    Tape<T>& t = *a.tape;
    const int out = t.push_value(matmul(t.value(a.id), t.value(b.id)));
    t.push_record("matmul", {a.id, b.id}, out, [ai = a.id, bi = b.id, out](Tape<T>& tp) {
        matmul_backward(tp.grad(out), tp.value(ai), tp.value(bi), tp.grad(ai), tp.grad(bi));
    });
    return {&t, out};
}

template <typename T>
Val<T> permute(Val<T> x, std::vector<int> axes) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(permute(t.value(x.id), axes));
    const std::vector<int> inv = inverse_permutation(axes);
    t.push_record("permute", {x.id}, out, [xi = x.id, out, inv](Tape<T>& tp) {
        const Tensor<T> g = permute(tp.grad(out), inv);
        Tensor<T>& gx = tp.grad(xi);
        for (long long i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
    return {&t, out};
}

template <typename T>
Val<T> reshape(Val<T> x, std::vector<int> shape) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(t.value(x.id).reshaped(std::move(shape)));
    t.push_record("reshape", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        const Tensor<T>& g = tp.grad(out);
        Tensor<T>& gx = tp.grad(xi);
        for (long long i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
    return {&t, out};
}

template <typename T>
Val<T> slice_axis(Val<T> x, int axis, int start, int len) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(slice_axis(t.value(x.id), axis, start, len));
    t.push_record("slice", {x.id}, out, [xi = x.id, out, axis, start](Tape<T>& tp) {
        slice_axis_backward(tp.grad(out), tp.value(xi), axis, start, tp.grad(xi));
    });
    return {&t, out};
}

// Contiguous channel blocks along axis 1 of (B,C,H,W); concat restores x.
template <typename T>
std::vector<Val<T>> split_channels(Val<T> x, int k) {
    const Tensor<T>& v = x.tape->value(x.id);
    check(v.rank() == 4, "split_channels: input must be (B,C,H,W)");
    const int C = v.extent(1);
    check(k >= 1 && C % k == 0, "split_channels: channel count " + std::to_string(C) +
                                    " not divisible by " + std::to_string(k));
    const int step = C / k;
    std::vector<Val<T>> parts;
    parts.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) parts.push_back(slice_axis(x, 1, i * step, step));
    return parts;
}

template <typename T>
Val<T> concat(const std::vector<Val<T>>& parts, int axis) {
    check(!parts.empty(), "concat: no parts");
    Tape<T>& t = *parts[0].tape;
    std::vector<Tensor<T>> vs;
    std::vector<int> ids;
    vs.reserve(parts.size());
    for (const auto& p : parts) {
        vs.push_back(t.value(p.id));
        ids.push_back(p.id);
    }
    const int out = t.push_value(concat(vs, axis));
    t.push_record("concat", ids, out, [ids, out, axis](Tape<T>& tp) {
        const Tensor<T>& g = tp.grad(out);
        int start = 0;
        for (int id : ids) {
            const int len = tp.value(id).extent(axis);
            slice_axis_backward(slice_axis(g, axis, start, len), tp.value(id), axis, 0, tp.grad(id));
            start += len;
        }
    });
    return {&t, out};
}

template <typename T>
Val<T> conv2d_3x3(Val<T> x, Val<T> w, Val<T> bias) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(conv2d_3x3(t.value(x.id), t.value(w.id), t.value(bias.id)));
    t.push_record("conv2d", {x.id, w.id, bias.id}, out, [xi = x.id, wi = w.id, bi = bias.id, out](Tape<T>& tp) {
        conv2d_3x3_backward(tp.grad(out), tp.value(xi), tp.value(wi), tp.grad(xi), tp.grad(wi), tp.grad(bi));
    });
    return {&t, out};
}

template <typename T>
Val<T> depthwise_conv2d(Val<T> x, Val<T> k, Val<T> bias) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(depthwise_conv2d(t.value(x.id), t.value(k.id), t.value(bias.id)));
    t.push_record("dwc", {x.id, k.id, bias.id}, out, [xi = x.id, ki = k.id, bi = bias.id, out](Tape<T>& tp) {
        depthwise_conv2d_backward(tp.grad(out), tp.value(xi), tp.value(ki), tp.grad(xi), tp.grad(ki), tp.grad(bi));
    });
    return {&t, out};
}

template <typename T>
Val<T> pointwise_conv2d(Val<T> x, Val<T> w, Val<T> bias) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(pointwise_conv2d(t.value(x.id), t.value(w.id), t.value(bias.id)));
    t.push_record("pwc", {x.id, w.id, bias.id}, out, [xi = x.id, wi = w.id, bi = bias.id, out](Tape<T>& tp) {
        pointwise_conv2d_backward(tp.grad(out), tp.value(xi), tp.value(wi), tp.grad(xi), tp.grad(wi), tp.grad(bi));
    });
    return {&t, out};
}

template <typename T>
Val<T> sigmoid(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(sigmoid(t.value(x.id)));
    t.push_record("sigmoid", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        sigmoid_backward(tp.grad(out), tp.value(out), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> gelu(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(gelu(t.value(x.id)));
    t.push_record("gelu", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        gelu_backward(tp.grad(out), tp.value(xi), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> softmax_lastdim(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(softmax_lastdim(t.value(x.id)));
    t.push_record("softmax", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        softmax_lastdim_backward(tp.grad(out), tp.value(out), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> global_avg_pool(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(global_avg_pool(t.value(x.id)));
    t.push_record("gap", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        global_avg_pool_backward(tp.grad(out), tp.value(xi), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> bilinear_resize(Val<T> x, int h1, int w1) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(bilinear_resize(t.value(x.id), h1, w1));
    t.push_record("bilinear", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        bilinear_resize_backward(tp.grad(out), tp.value(xi), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> scale(Val<T> x, T c) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(scale(t.value(x.id), c));
    t.push_record("scale", {x.id}, out, [xi = x.id, out, c](Tape<T>& tp) {
        const Tensor<T>& g = tp.grad(out);
        Tensor<T>& gx = tp.grad(xi);
        for (long long i = 0; i < g.numel(); ++i) gx[i] += c * g[i];
    });
    return {&t, out};
}

template <typename T>
Val<T> abs_ew(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(abs_ew(t.value(x.id)));
    t.push_record("abs", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        abs_ew_backward(tp.grad(out), tp.value(xi), tp.grad(xi));
    });
    return {&t, out};
}

template <typename T>
Val<T> sum_all(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(sum_all(t.value(x.id)));
    t.push_record("sum_all", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        const T g = tp.grad(out)[0];
        Tensor<T>& gx = tp.grad(xi);
        for (long long i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return {&t, out};
}

template <typename T>
Val<T> mean_all(Val<T> x) {
    Tape<T>& t = *x.tape;
    const int out = t.push_value(mean_all(t.value(x.id)));
    t.push_record("mean_all", {x.id}, out, [xi = x.id, out](Tape<T>& tp) {
        Tensor<T>& gx = tp.grad(xi);
        const T g = tp.grad(out)[0] / static_cast<T>(gx.numel());
        for (long long i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return {&t, out};
}

}  // namespace mqi
