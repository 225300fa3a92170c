#pragma once

#include "conv.hpp"
#include "flow_field.hpp"

namespace ffeinr {

struct EncoderConfig {
    int c_f = 64;
    int n_blocks = 3;
    int lstm_hidden = 64;
    int kernel = 3;

    void validate() const {
        require(c_f > 0 && n_blocks >= 0 && lstm_hidden > 0 && kernel > 0, "encoder config values must be positive");
        require(kernel % 2 == 1, "encoder kernel must be odd");
    }
};

/// Encoder output f_i: C_f x (H_l, W_l), stored as a (H_l*W_l) x C_f map.
template <typename S>
using FeatureGrid = Map2d<S>;

template <typename S>
Map2d<S> frame_to_map(std::span<const float> frame, std::size_t h, std::size_t w, std::size_t c) {
    Map2d<S> m(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t ch = 0; ch < c; ++ch)
            m.data(Eigen::Index(p), Eigen::Index(ch)) = static_cast<S>(frame[p * c + ch]);
    return m;
}

namespace detail {

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
Mat<S> leaky(const Mat<S>& z, S slope) {
    return z.unaryExpr([slope](S v) { return leaky_relu(v, slope); });
}

template <typename S>
Mat<S> leaky_grad(const Mat<S>& g, const Mat<S>& z, S slope) {
    return g.binaryExpr(z, [slope](S gv, S zv) { return zv > S(0) ? gv : slope * gv; });
}

}  // namespace detail

template <typename S>
struct ExtractCache {
    ConvCache<S> in;
    Mat<S> z_in;
    std::vector<ConvCache<S>> a, b;
    std::vector<Mat<S>> z_a;
};

template <typename S>
struct InterpCache {
    ConvCache<S> c0, c1;
    Mat<S> b0, b1;
    Vec<S> w0;
    double alpha = 0.5;
};

template <typename S>
struct LstmStepCache {
    ConvCache<S> conv;
    Mat<S> i, f, o, g, c_prev, tanh_c;
};

template <typename S>
struct FuseCache {
    std::size_t length = 0, mid = 0;
    std::vector<LstmStepCache<S>> fwd, bwd;
    ConvCache<S> proj;
};

template <typename S>
struct EncoderCache {
    ExtractCache<S> e0, e1;
    InterpCache<S> interp;
    FuseCache<S> fuse;
};

/// One ConvLSTM direction: gates = conv([x; h]) split into i, f, o, g.
template <typename S>
class ConvLstmCell {
public:
    ConvLstmCell() = default;
    ConvLstmCell(const std::string& name, int in, int hidden, int kernel, Rng& rng)
        : hidden_(hidden), conv_(name, in + hidden, 4 * hidden, kernel, rng) {}

    int hidden() const { return hidden_; }
    Conv2d<S>& conv() { return conv_; }

    template <typename F>
    void for_each_param(F&& f) {
        conv_.for_each_param(f);
    }

    /// Runs the cell over `seq` from zero state; returns the last hidden state.
    Map2d<S> run(const std::vector<const Map2d<S>*>& seq, std::vector<LstmStepCache<S>>* caches) const {
        const int H = seq.front()->h, W = seq.front()->w;
        const Eigen::Index P = seq.front()->pixels(), hid = hidden_;
        Mat<S> h = Mat<S>::Zero(P, hid), c = Mat<S>::Zero(P, hid);
        if (caches) caches->clear();
        for (const auto* x : seq) {
            Map2d<S> xin(H, W, Mat<S>(P, x->channels() + hid));
            xin.data << x->data, h;
            LstmStepCache<S> sc;
            Map2d<S> gates = conv_.forward(xin, caches ? &sc.conv : nullptr);
            auto sig = [](S v) { return detail::sigmoid(v); };
            Mat<S> i = gates.data.middleCols(0, hid).unaryExpr(sig);
            Mat<S> f = gates.data.middleCols(hid, hid).unaryExpr(sig);
            Mat<S> o = gates.data.middleCols(2 * hid, hid).unaryExpr(sig);
            Mat<S> g = gates.data.middleCols(3 * hid, hid).array().tanh().matrix();
            Mat<S> c_new = (f.array() * c.array() + i.array() * g.array()).matrix();
            Mat<S> tc = c_new.array().tanh().matrix();
            h = (o.array() * tc.array()).matrix();
            if (caches) {
                sc.i = std::move(i);
                sc.f = std::move(f);
                sc.o = std::move(o);
                sc.g = std::move(g);
                sc.c_prev = std::move(c);
                sc.tanh_c = std::move(tc);
                caches->push_back(std::move(sc));
            }
            c = std::move(c_new);
        }
        return Map2d<S>(H, W, std::move(h));
    }

    /// Backpropagates d(last hidden) through time; returns one input gradient per step.
    std::vector<Map2d<S>> backward(const Mat<S>& dh_last, const std::vector<LstmStepCache<S>>& caches, int H,
                                   int W) {
        const Eigen::Index hid = hidden_;
        std::vector<Map2d<S>> dx(caches.size());
        Mat<S> dh = dh_last;
        Mat<S> dc = Mat<S>::Zero(dh.rows(), hid);
        for (std::size_t s = caches.size(); s-- > 0;) {
            const auto& sc = caches[s];
            auto oa = sc.o.array(), ia = sc.i.array(), fa = sc.f.array(), ga = sc.g.array(), tca = sc.tanh_c.array();
            Mat<S> dct = (dc.array() + dh.array() * oa * (S(1) - tca * tca)).matrix();
            Map2d<S> dgates(H, W, Mat<S>(dh.rows(), 4 * hid));
            dgates.data.middleCols(0, hid) = (dct.array() * ga * ia * (S(1) - ia)).matrix();
            dgates.data.middleCols(hid, hid) = (dct.array() * sc.c_prev.array() * fa * (S(1) - fa)).matrix();
            dgates.data.middleCols(2 * hid, hid) = (dh.array() * tca * oa * (S(1) - oa)).matrix();
            dgates.data.middleCols(3 * hid, hid) = (dct.array() * ia * (S(1) - ga * ga)).matrix();
            dc = (dct.array() * fa).matrix();
            Map2d<S> dxin = conv_.backward(dgates, sc.conv);
            const Eigen::Index cx = dxin.channels() - hid;
            dx[s] = Map2d<S>(H, W, Mat<S>(dxin.data.leftCols(cx)));
            dh = dxin.data.rightCols(hid);
        }
        return dx;
    }

private:
    int hidden_ = 0;
    Conv2d<S> conv_;
};

/// Input encoder: per-frame residual conv features, a gated two-branch
/// feature interpolation for the intermediate time, and a bidirectional
/// ConvLSTM over [f0, f_mid, f1] projected back to C_f channels.
template <typename S>
class Encoder {
public:
    static constexpr double kLeakySlope = 0.1;

    Encoder() = default;
    Encoder(const EncoderConfig& cfg, int in_channels, Rng& rng) : cfg_(cfg), in_channels_(in_channels) {
        cfg.validate();
        require(in_channels > 0, "encoder input channels must be positive");
        const int k = cfg.kernel, cf = cfg.c_f;
        conv_in_ = Conv2d<S>("encoder.conv_in", in_channels, cf, k, rng);
        for (int b = 0; b < cfg.n_blocks; ++b) {
            const auto n = "encoder.block" + std::to_string(b);
            block_a_.emplace_back(n + ".conv_a", cf, cf, k, rng);
            block_b_.emplace_back(n + ".conv_b", cf, cf, k, rng);
        }
        branch0_ = Conv2d<S>("encoder.interp.branch0", cf, cf, k, rng);
        branch1_ = Conv2d<S>("encoder.interp.branch1", cf, cf, k, rng);
        // residual branches start as identity, gates start uniform
        for (auto* br : {&branch0_, &branch1_}) {
            br->weight().value.setZero();
            br->bias().value.setZero();
        }
        gate0_ = Param<S>("encoder.interp.gate0", cf, 1);
        gate1_ = Param<S>("encoder.interp.gate1", cf, 1);
        lstm_fwd_ = ConvLstmCell<S>("encoder.lstm_fwd", cf, cfg.lstm_hidden, k, rng);
        lstm_bwd_ = ConvLstmCell<S>("encoder.lstm_bwd", cf, cfg.lstm_hidden, k, rng);
        proj_ = Conv2d<S>("encoder.proj", 2 * cfg.lstm_hidden, cf, 1, rng);
    }

    const EncoderConfig& config() const { return cfg_; }
    int in_channels() const { return in_channels_; }

    Conv2d<S>& conv_in() { return conv_in_; }
    Conv2d<S>& block_a(int b) { return block_a_[static_cast<std::size_t>(b)]; }
    Conv2d<S>& block_b(int b) { return block_b_[static_cast<std::size_t>(b)]; }
    Conv2d<S>& branch(int k) { return k == 0 ? branch0_ : branch1_; }
    Param<S>& gate(int k) { return k == 0 ? gate0_ : gate1_; }
    ConvLstmCell<S>& lstm(bool forward_dir) { return forward_dir ? lstm_fwd_ : lstm_bwd_; }
    Conv2d<S>& projection() { return proj_; }

    template <typename F>
    void for_each_param(F&& f) {
        conv_in_.for_each_param(f);
        for (std::size_t b = 0; b < block_a_.size(); ++b) {
            block_a_[b].for_each_param(f);
            block_b_[b].for_each_param(f);
        }
        branch0_.for_each_param(f);
        branch1_.for_each_param(f);
        f(gate0_);
        f(gate1_);
        lstm_fwd_.for_each_param(f);
        lstm_bwd_.for_each_param(f);
        proj_.for_each_param(f);
    }

    // ---- extract ----

    Map2d<S> extract(const Map2d<S>& x, ExtractCache<S>* cache = nullptr) const {
        require(x.channels() == in_channels_, "encoder input channel mismatch");
        const S slope = static_cast<S>(kLeakySlope);
        Map2d<S> z = conv_in_.forward(x, cache ? &cache->in : nullptr);
        Map2d<S> h(x.h, x.w, detail::leaky(z.data, slope));
        if (cache) {
            cache->z_in = std::move(z.data);
            cache->a.assign(block_a_.size(), {});
            cache->b.assign(block_a_.size(), {});
            cache->z_a.assign(block_a_.size(), {});
        }
        for (std::size_t b = 0; b < block_a_.size(); ++b) {
            Map2d<S> za = block_a_[b].forward(h, cache ? &cache->a[b] : nullptr);
            Map2d<S> a(x.h, x.w, detail::leaky(za.data, slope));
            Map2d<S> zb = block_b_[b].forward(a, cache ? &cache->b[b] : nullptr);
            h.data += zb.data;
            if (cache) cache->z_a[b] = std::move(za.data);
        }
        return h;
    }

    void extract_backward(Map2d<S> dh, const ExtractCache<S>& cache) {
        const S slope = static_cast<S>(kLeakySlope);
        for (std::size_t b = block_a_.size(); b-- > 0;) {
            Map2d<S> da = block_b_[b].backward(dh, cache.b[b]);
            da.data = detail::leaky_grad(da.data, cache.z_a[b], slope);
            dh.data += block_a_[b].backward(da, cache.a[b]).data;
        }
        dh.data = detail::leaky_grad(dh.data, cache.z_in, slope);
        conv_in_.backward(dh, cache.in);
    }

    // ---- interpolate ----

    Vec<S> gate_weights(double alpha) const {
        Vec<S> w0(cfg_.c_f);
        for (int ch = 0; ch < cfg_.c_f; ++ch) {
            const double a0 = (1.0 - alpha) * std::exp(double(gate0_.value(ch, 0)));
            const double a1 = alpha * std::exp(double(gate1_.value(ch, 0)));
            w0(ch) = static_cast<S>(a0 / (a0 + a1));
        }
        return w0;
    }

    Map2d<S> interpolate(const Map2d<S>& f0, const Map2d<S>& f1, double alpha,
                         InterpCache<S>* cache = nullptr) const {
        require(f0.same_shape(f1), "interpolate: feature maps differ in shape");
        require(f0.channels() == cfg_.c_f, "interpolate: channel count mismatch");
        require(alpha >= 0.0 && alpha <= 1.0, "interpolate: alpha outside [0,1]");
        Map2d<S> b0 = branch0_.forward(f0, cache ? &cache->c0 : nullptr);
        Map2d<S> b1 = branch1_.forward(f1, cache ? &cache->c1 : nullptr);
        b0.data += f0.data;
        b1.data += f1.data;
        const Vec<S> w0 = gate_weights(alpha);
        Map2d<S> out(f0.h, f0.w, cfg_.c_f);
        for (int ch = 0; ch < cfg_.c_f; ++ch)
            out.data.col(ch) = w0(ch) * b0.data.col(ch) + (S(1) - w0(ch)) * b1.data.col(ch);
        if (cache) {
            cache->b0 = std::move(b0.data);
            cache->b1 = std::move(b1.data);
            cache->w0 = w0;
            cache->alpha = alpha;
        }
        return out;
    }

    std::pair<Map2d<S>, Map2d<S>> interpolate_backward(const Map2d<S>& dout, const InterpCache<S>& cache) {
        const int H = dout.h, W = dout.w;
        Map2d<S> db0(H, W, cfg_.c_f), db1(H, W, cfg_.c_f);
        for (int ch = 0; ch < cfg_.c_f; ++ch) {
            const S w0 = cache.w0(ch);
            db0.data.col(ch) = w0 * dout.data.col(ch);
            db1.data.col(ch) = (S(1) - w0) * dout.data.col(ch);
            const S dw0 = dout.data.col(ch).dot(cache.b0.col(ch) - cache.b1.col(ch));
            const S ds = dw0 * w0 * (S(1) - w0);
            gate0_.grad(ch, 0) += ds;
            gate1_.grad(ch, 0) -= ds;
        }
        Map2d<S> df0 = branch0_.backward(db0, cache.c0);
        Map2d<S> df1 = branch1_.backward(db1, cache.c1);
        df0.data += db0.data;
        df1.data += db1.data;
        return {std::move(df0), std::move(df1)};
    }

    // ---- fuse ----

    /// Concatenated [forward; backward] hidden states at the middle step,
    /// before projection.
    Map2d<S> fuse_states(const std::vector<Map2d<S>>& seq, FuseCache<S>* cache = nullptr) const {
        require(!seq.empty(), "fuse: empty sequence");
        for (const auto& m : seq) {
            require(m.same_shape(seq.front()), "fuse: sequence maps differ in shape");
            require(m.channels() == cfg_.c_f, "fuse: channel count mismatch");
        }
        const std::size_t mid = (seq.size() - 1) / 2;
        std::vector<const Map2d<S>*> fwd, bwd;
        for (std::size_t i = 0; i <= mid; ++i) fwd.push_back(&seq[i]);
        for (std::size_t i = seq.size(); i-- > mid;) bwd.push_back(&seq[i]);
        Map2d<S> hf = lstm_fwd_.run(fwd, cache ? &cache->fwd : nullptr);
        Map2d<S> hb = lstm_bwd_.run(bwd, cache ? &cache->bwd : nullptr);
        if (cache) {
            cache->length = seq.size();
            cache->mid = mid;
        }
        Map2d<S> cat(hf.h, hf.w, Mat<S>(hf.pixels(), 2 * cfg_.lstm_hidden));
        cat.data << hf.data, hb.data;
        return cat;
    }

    FeatureGrid<S> fuse(const std::vector<Map2d<S>>& seq, FuseCache<S>* cache = nullptr) const {
        Map2d<S> cat = fuse_states(seq, cache);
        return proj_.forward(cat, cache ? &cache->proj : nullptr);
    }

    /// Returns one gradient map per sequence element.
    std::vector<Map2d<S>> fuse_backward(const Map2d<S>& dout, const FuseCache<S>& cache) {
        const int H = dout.h, W = dout.w, hid = cfg_.lstm_hidden;
        Map2d<S> dcat = proj_.backward(dout, cache.proj);
        auto dfwd = lstm_fwd_.backward(dcat.data.leftCols(hid), cache.fwd, H, W);
        auto dbwd = lstm_bwd_.backward(dcat.data.rightCols(hid), cache.bwd, H, W);
        std::vector<Map2d<S>> dseq(cache.length, Map2d<S>(H, W, cfg_.c_f));
        for (std::size_t i = 0; i <= cache.mid; ++i) dseq[i].data += dfwd[i].data;
        for (std::size_t j = 0; j < dbwd.size(); ++j) dseq[cache.length - 1 - j].data += dbwd[j].data;
        return dseq;
    }

    // ---- full encoder ----

    FeatureGrid<S> encode(const SlicePair& pair, EncoderCache<S>* cache = nullptr) const {
        require(pair.f0.size() == pair.f1.size() && pair.f0.size() == pair.h * pair.w * pair.c,
                "encode: frames differ in shape");
        require(static_cast<int>(pair.c) == in_channels_, "encode: channel count mismatch");
        auto x0 = frame_to_map<S>(pair.f0, pair.h, pair.w, pair.c);
        auto x1 = frame_to_map<S>(pair.f1, pair.h, pair.w, pair.c);
        std::vector<Map2d<S>> seq(3);
        seq[0] = extract(x0, cache ? &cache->e0 : nullptr);
        seq[2] = extract(x1, cache ? &cache->e1 : nullptr);
        seq[1] = interpolate(seq[0], seq[2], 0.5, cache ? &cache->interp : nullptr);
        return fuse(seq, cache ? &cache->fuse : nullptr);
    }

    void encode_backward(const FeatureGrid<S>& dgrid, const EncoderCache<S>& cache) {
        auto dseq = fuse_backward(dgrid, cache.fuse);
        auto [d0, d1] = interpolate_backward(dseq[1], cache.interp);
        dseq[0].data += d0.data;
        dseq[2].data += d1.data;
        extract_backward(std::move(dseq[0]), cache.e0);
        extract_backward(std::move(dseq[2]), cache.e1);
    }

private:
    EncoderConfig cfg_;
    int in_channels_ = 0;
    Conv2d<S> conv_in_;
    std::vector<Conv2d<S>> block_a_, block_b_;
    Conv2d<S> branch0_, branch1_;
    Param<S> gate0_, gate1_;
    ConvLstmCell<S> lstm_fwd_, lstm_bwd_;
    Conv2d<S> proj_;
};

}  // namespace ffeinr
