#pragma once

#include "checkpoint.hpp"
#include "metrics.hpp"

#include <functional>
#include <map>
#include <sstream>

namespace ffeinr {

/// Mean over elements of sqrt((pred - target)^2 + eps^2).
template <typename S>
double charbonnier(const Mat<S>& pred, const Mat<S>& target, double eps) {
    require(pred.rows() == target.rows() && pred.cols() == target.cols(), "charbonnier: shape mismatch");
    require(eps > 0, "charbonnier: eps must be positive");
    require(pred.size() > 0, "charbonnier: empty input");
    double sum = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double d = double(pred.data()[i]) - double(target.data()[i]);
        sum += std::sqrt(d * d + eps * eps);
    }
    return sum / static_cast<double>(pred.size());
}

/// d/d(pred) of sum(sqrt(d^2 + eps^2)) * scale.
template <typename S>
Mat<S> charbonnier_grad(const Mat<S>& pred, const Mat<S>& target, double eps, double scale) {
    Mat<S> g(pred.rows(), pred.cols());
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double d = double(pred.data()[i]) - double(target.data()[i]);
        g.data()[i] = static_cast<S>(scale * d / std::sqrt(d * d + eps * eps));
    }
    return g;
}

template <typename S>
class Adam {
public:
    Adam() = default;
    Adam(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(Model<S>& model, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
        std::size_t k = 0;
        model.for_each_param([&](Param<S>& p) {
            if (k == m_.size()) {
                m_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
                v_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
            }
            auto& m = m_[k];
            auto& v = v_[k];
            m = S(b1_) * m + S(1 - b1_) * p.grad;
            v = S(b2_) * v + S(1 - b2_) * p.grad.cwiseAbs2();
            const S step = S(lr / c1);
            const S root_c2 = S(std::sqrt(c2));
            p.value.array() -= step * m.array() / ((v.array().sqrt() / root_c2) + S(eps_));
            ++k;
        });
    }

    int steps() const { return t_; }

private:
    double b1_ = 0.9, b2_ = 0.99, eps_ = 1e-8;
    int t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

/// Number of trailing slice pairs held out for validation.
inline std::size_t held_out_pairs(std::size_t pairs, double fraction) {
    if (pairs <= 1 || fraction <= 0) return 0;
    auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs)));
    return std::min(std::max<std::size_t>(n, 1), pairs - 1);
}

/// First high-res frame index that belongs only to held-out pairs' interiors.
inline std::size_t validation_split_frame(const Dims& high, const TrainConfig& t) {
    const std::size_t pairs = (high.t - 1) / static_cast<std::size_t>(t.st);
    return (pairs - held_out_pairs(pairs, t.val_fraction)) * static_cast<std::size_t>(t.st);
}

/// Replayable uniform sampler of integer factor pairs for second-stage training.
class FactorSampler {
public:
    FactorSampler(const TrainConfig& t, std::uint64_t seed)
        : s_(t.stage2_s_min, t.stage2_s_max), t_(t.stage2_t_min, t.stage2_t_max), rng_(seed) {}
    Factors next() {
        Factors f;
        f.s = s_(rng_);
        f.t = t_(rng_);
        return f;
    }

private:
    std::uniform_int_distribution<int> s_, t_;
    Rng rng_;
};

using ProgressFn = std::function<void(int iteration, double loss)>;

/// Owns the model, optimizer state and data for a training run.
class Trainer {
public:
    Trainer(const FlowField& low, const FlowField& high, RunConfig cfg, ProgressFn progress = {})
        : cfg_(std::move(cfg)), progress_(std::move(progress)) {
        cfg_.train.validate();
        low.validate();
        high.validate();
        const auto& t = cfg_.train;
        const FlowField expect = downsample(high, t.sx, t.st);
        if (expect.dims != low.dims || expect.values != low.values)
            throw ArgumentError("low-res field is not downsample(high, sx, st)");
        require(low.dims.t >= 2, "training needs at least two low-res frames");
        cfg_.model.channels = static_cast<int>(low.dims.c);
        patch_ = std::min<std::size_t>({std::size_t(t.patch), low.dims.h, low.dims.w});
        if (cfg_.model.inr.flow_reference == 0) cfg_.model.inr.flow_reference = static_cast<int>(patch_);
        norm_ = compute_norm_stats(low);
        high_n_ = apply_norm(high, norm_);
        low_n_ = apply_norm(low, norm_);
        split_frame_ = validation_split_frame(high.dims, t);
        train_pairs_ = split_frame_ / static_cast<std::size_t>(t.st);
        model_ = Model<float>(cfg_.model, t.seed);
        adam_ = Adam<float>(t.beta1, t.beta2, t.adam_eps);
        rng_ = Rng(t.seed ^ 0x5eed5eedULL);
    }

    void run_stage1() {
        for (int i = 0; i < cfg_.train.iters; ++i)
            step(low_n_, {cfg_.train.sx, cfg_.train.st}, train_pairs_);
    }

    /// Continues training with factors drawn uniformly from the stage-2 ranges.
    void run_stage2() {
        const auto& t = cfg_.train;
        FactorSampler sampler(t, t.seed ^ 0xfac7035ULL);
        for (int i = 0; i < t.stage2_iters; ++i) {
            const Factors f = sampler.next();
            stage2_factors_.push_back(f);
            auto it = lowres_cache_.find({f.s, f.t});
            if (it == lowres_cache_.end())
                it = lowres_cache_.emplace(std::make_pair(f.s, f.t), downsample(high_n_, f.s, f.t)).first;
            const std::size_t limit = std::max<std::size_t>(1, split_frame_ / static_cast<std::size_t>(f.t));
            step(it->second, f, std::min(limit, it->second.dims.t - 1));
        }
    }

    /// One optimizer step on a fresh random batch; returns the batch loss.
    double step(const FlowField& low_n, Factors f, std::size_t pair_limit) {
        const auto& t = cfg_.train;
        const std::size_t patch = std::min<std::size_t>({patch_, low_n.dims.h, low_n.dims.w});
        const SampleOptions opt{pair_limit, static_cast<std::size_t>(t.queries)};
        std::vector<TrainingSample> batch;
        std::size_t elements = 0;
        for (int b = 0; b < t.batch; ++b) {
            batch.push_back(crop_patch(low_n, high_n_, f, patch, rng_, opt));
            elements += batch.back().target.size();
        }
        model_.zero_grad();
        double loss_sum = 0;
        const double scale = 1.0 / static_cast<double>(elements);
        for (const auto& smp : batch) {
            ForwardCache<float> cache;
            const Mat<float> out = model_.forward(smp.coords, smp.input, &cache);
            const Mat<float> target =
                Eigen::Map<const Mat<float>>(smp.target.data(), out.rows(), out.cols());
            loss_sum += charbonnier(out, target, t.charbonnier_eps) * double(out.size());
            if (!std::isfinite(loss_sum)) break;
            model_.backward(charbonnier_grad(out, target, t.charbonnier_eps, scale), cache);
        }
        const double loss = loss_sum * scale;
        const double lr = t.lr_at(iteration_);
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite loss at iteration " << iteration_ << " (lr=" << lr << ", seed=" << t.seed << ")";
            throw TrainingError(msg.str());
        }
        adam_.step(model_, lr);
        history_.push_back(static_cast<float>(loss));
        ++iteration_;
        if (progress_) progress_(iteration_, loss);
        return loss;
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.config = cfg_;
        ck.norm = norm_;
        ck.iteration = iteration_;
        ck.loss_history = history_;
        ck.stage2_factors = stage2_factors_;
        ck.model = model_;
        return ck;
    }

    Model<float>& model() { return model_; }
    const RunConfig& config() const { return cfg_; }
    const NormStats& norm() const { return norm_; }
    const std::vector<float>& history() const { return history_; }
    std::size_t train_pairs() const { return train_pairs_; }

private:
    RunConfig cfg_;
    ProgressFn progress_;
    std::size_t patch_ = 16;
    NormStats norm_;
    FlowField high_n_, low_n_;
    std::size_t split_frame_ = 0, train_pairs_ = 0;
    Model<float> model_;
    Adam<float> adam_;
    Rng rng_;
    int iteration_ = 0;
    std::vector<float> history_;
    std::vector<Factors> stage2_factors_;
    std::map<std::pair<int, int>, FlowField> lowres_cache_;
};

inline Checkpoint train_one_stage(const FlowField& low, const FlowField& high, const RunConfig& cfg,
                                  ProgressFn progress = {}) {
    Trainer tr(low, high, cfg, std::move(progress));
    tr.run_stage1();
    return tr.checkpoint();
}

inline Checkpoint train_two_stage(const FlowField& low, const FlowField& high, const RunConfig& cfg,
                                  ProgressFn progress = {}) {
    Trainer tr(low, high, cfg, std::move(progress));
    tr.run_stage1();
    tr.run_stage2();
    return tr.checkpoint();
}

}  // namespace ffeinr
