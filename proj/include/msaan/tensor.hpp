#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "msaan/common.hpp"

namespace msaan {

struct Dims {
    int n = 0;  // batch
    int c = 0;  // channels
    int h = 0;  // rows
    int w = 0;  // cols

    bool operator==(const Dims&) const = default;

    int64_t numel() const { return int64_t(n) * c * h * w; }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

// Dense NCHW tensor. float is the storage type everywhere in the engine;
// the double instantiation exists for reference paths (finite differences,
// oracle comparisons) that need extra headroom.
template <std::floating_point S>
struct TensorT {
    Dims dims;
    std::vector<S> data;

    TensorT() = default;

    TensorT(int n, int c, int h, int w) : dims{n, c, h, w}, data(check_dims(dims), S(0)) {}

    explicit TensorT(Dims d) : dims(d), data(check_dims(d), S(0)) {}

    TensorT(Dims d, std::vector<S> values) : dims(d), data(std::move(values)) {
        check_dims(d);
        MSAAN_CHECK(static_cast<int64_t>(data.size()) == d.numel(),
                    "tensor data length " + std::to_string(data.size()) + " does not match dims " + d.str());
    }

    static TensorT full(Dims d, S value) {
        TensorT t(d);
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static TensorT scalar(S value) { return full({1, 1, 1, 1}, value); }

    int64_t numel() const { return dims.numel(); }

    int64_t index(int n, int c, int y, int x) const {
        return ((int64_t(n) * dims.c + c) * dims.h + y) * dims.w + x;
    }

    S& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
    S at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

    S* plane(int n, int c) { return data.data() + (int64_t(n) * dims.c + c) * dims.h * dims.w; }
    const S* plane(int n, int c) const { return data.data() + (int64_t(n) * dims.c + c) * dims.h * dims.w; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    static int64_t check_dims(const Dims& d) {
        MSAAN_CHECK(d.n >= 1 && d.c >= 1 && d.h >= 1 && d.w >= 1, "tensor dims must all be >= 1, got " + d.str());
        return d.numel();
    }
};

using Tensor = TensorT<float>;

template <std::floating_point To, std::floating_point From>
TensorT<To> cast(const TensorT<From>& t) {
    TensorT<To> out(t.dims);
    for (int64_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<To>(t.data[i]);
    return out;
}

// Weights of a 2-D convolution. kernel dims are (c_out, c_in_per_group, kh, kw).
template <std::floating_point S>
struct ConvWeightsT {
    TensorT<S> kernel;
    std::vector<S> bias;
    int groups = 1;
};

using ConvWeights = ConvWeightsT<float>;

template <std::floating_point S>
struct ComplexTensorT {
    TensorT<S> re;
    TensorT<S> im;

    ComplexTensorT() = default;
    ComplexTensorT(TensorT<S> r, TensorT<S> i) : re(std::move(r)), im(std::move(i)) {
        MSAAN_CHECK(re.dims == im.dims, "complex tensor re/im dims differ");
    }
};

using ComplexTensor = ComplexTensorT<float>;

}  // namespace msaan
