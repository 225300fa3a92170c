#pragma once

#include "core.hpp"

#include <cmath>

namespace ffeinr {

struct SirenLayerSpec {
    int fan_in = 1;
    int fan_out = 1;
    double omega0 = 30.0;
    bool is_first = false;
};

/// Weight bound of the sine-network initialization: 1/fan_in for the first
/// layer, sqrt(6/fan_in)/omega0 otherwise.
inline double siren_weight_bound(const SirenLayerSpec& spec) {
    if (spec.is_first) return 1.0 / spec.fan_in;
    return std::sqrt(6.0 / spec.fan_in) / spec.omega0;
}
inline double siren_bias_bound(const SirenLayerSpec& spec) {
    return std::sqrt(6.0 / spec.fan_in) / spec.omega0;
}

template <typename S>
struct LayerWeights {
    Mat<S> weight;  // fan_out x fan_in
    Vec<S> bias;
};

template <typename S>
LayerWeights<S> siren_init(const SirenLayerSpec& spec, Rng& rng) {
    require(spec.fan_in > 0 && spec.fan_out > 0, "siren layer dims must be positive");
    require(spec.omega0 > 0, "omega0 must be positive");
    LayerWeights<S> lw{Mat<S>(spec.fan_out, spec.fan_in), Vec<S>(spec.fan_out)};
    fill_uniform(lw.weight, siren_weight_bound(spec), rng);
    Mat<S> b(spec.fan_out, 1);
    fill_uniform(b, siren_bias_bound(spec), rng);
    lw.bias = b;
    return lw;
}

struct SirenShape {
    int in = 2;
    int width = 256;
    int hidden_layers = 3;
    int out = 1;
    double omega0 = 30.0;
};

template <typename S>
struct SirenCache {
    std::vector<Mat<S>> inputs;  // input to each layer
    std::vector<Mat<S>> phase;   // omega0 * (W x + b) for each sine layer
};

/// Fully connected sine network: `hidden_layers` layers computing
/// sin(omega0 (W x + b)), then one affine output layer. Batches are columns.
template <typename S>
class SirenNet {
public:
    SirenNet() = default;
    SirenNet(const std::string& name, const SirenShape& shape, Rng& rng) : shape_(shape) {
        require(shape.in > 0 && shape.width > 0 && shape.out > 0 && shape.hidden_layers >= 1,
                "invalid siren shape");
        int fan_in = shape.in;
        for (int l = 0; l <= shape.hidden_layers; ++l) {
            const bool last = l == shape.hidden_layers;
            SirenLayerSpec spec{fan_in, last ? shape.out : shape.width, shape.omega0, l == 0};
            auto lw = siren_init<S>(spec, rng);
            const auto idx = std::to_string(l);
            weights_.emplace_back(name + "." + idx + ".weight", spec.fan_out, spec.fan_in);
            biases_.emplace_back(name + "." + idx + ".bias", spec.fan_out, 1);
            weights_.back().value = lw.weight;
            biases_.back().value = lw.bias;
            fan_in = shape.width;
        }
    }

    const SirenShape& shape() const { return shape_; }
    int layers() const { return static_cast<int>(weights_.size()); }
    Param<S>& weight(int l) { return weights_[static_cast<std::size_t>(l)]; }
    Param<S>& bias(int l) { return biases_[static_cast<std::size_t>(l)]; }
    const Param<S>& weight(int l) const { return weights_[static_cast<std::size_t>(l)]; }
    const Param<S>& bias(int l) const { return biases_[static_cast<std::size_t>(l)]; }

    template <typename F>
    void for_each_param(F&& f) {
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            f(weights_[l]);
            f(biases_[l]);
        }
    }

    Mat<S> forward(const Mat<S>& x, SirenCache<S>* cache = nullptr) const {
        require(x.rows() == shape_.in, "siren input width mismatch: expected " + std::to_string(shape_.in) +
                                           ", got " + std::to_string(x.rows()));
        if (cache) {
            cache->inputs.clear();
            cache->phase.clear();
        }
        const S w0 = static_cast<S>(shape_.omega0);
        Mat<S> h = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Mat<S> z = weights_[l].value * h;
            z.colwise() += biases_[l].value.col(0);
            if (cache) cache->inputs.push_back(std::move(h));
            if (l + 1 == weights_.size()) return z;
            z *= w0;
            h = z.array().sin().matrix();
            if (cache) cache->phase.push_back(std::move(z));
        }
        return h;
    }

    /// Accumulates parameter gradients and returns d(loss)/d(input).
    Mat<S> backward(const Mat<S>& grad_out, const SirenCache<S>& cache) {
        const S w0 = static_cast<S>(shape_.omega0);
        Mat<S> g = grad_out;
        for (std::size_t l = weights_.size(); l-- > 0;) {
            if (l + 1 < weights_.size()) g.array() *= cache.phase[l].array().cos() * w0;
            weights_[l].grad.noalias() += g * cache.inputs[l].transpose();
            biases_[l].grad.col(0) += g.rowwise().sum();
            g = weights_[l].value.transpose() * g;
        }
        return g;
    }

private:
    SirenShape shape_;
    std::vector<Param<S>> weights_;
    std::vector<Param<S>> biases_;
};

}  // namespace ffeinr
