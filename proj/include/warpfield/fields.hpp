#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/dual.hpp"
#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace warpfield {

// ---------------------------------------------------------------------------
// Evaluation backends. The same network code runs over plain tensors (fast
// rendering), tape vars (training), and forward-mode duals of both (jvp for
// divergence and exact bent-ray directions).
// ---------------------------------------------------------------------------

struct PlainOps {
    using V = Tensor;
    using P = Tensor;
    static V linear(const V& x, const P& w, const P& b) {
        V y = warpfield::matmul(x, w);
        for (int r = 0; r < y.rows(); ++r)
            for (int c = 0; c < y.cols(); ++c) y.at(r, c) += b.at(0, c);
        return y;
    }
    static V relu(const V& x) { return warpfield::relu(x); }
    static V tanh(const V& x) { return tanh_t(x); }
    static V softplus(const V& x) { return warpfield::softplus(x); }
    // composed exactly like the tape path so both agree to the ulp
    static V sigmoid(const V& x) {
        return map_unary(x, [](double v) { return 0.5 * std::tanh(0.5 * v) + 0.5; });
    }
    static V sin(const V& x) {
        return map_unary(x, [](double v) { return std::sin(v); });
    }
    static V cos(const V& x) {
        return map_unary(x, [](double v) { return std::cos(v); });
    }
    static V concat(const V& a, const V& b) { return concat_cols(a, b); }
    static V slice(const V& a, int c0, int c1) { return slice_cols(a, c0, c1); }
    static V scale(const V& a, double s) { return a * s; }
    static V shift(const V& a, double s) { return a + s; }
    static V mul(const V& a, const V& b) { return a * b; }
    static V broadcast(const V& a, int cols) { return broadcast_cols(a, cols); }
    static int rows(const V& a) { return a.rows(); }
};

struct TapeOps {
    using V = Var;
    using P = Var;
    static V linear(const V& x, const P& w, const P& b) {
        return add(matmul(x, w), broadcast_rows(b, x.rows()));
    }
    static V relu(const V& x) { return vrelu(x); }
    static V tanh(const V& x) { return vtanh(x); }
    static V softplus(const V& x) { return vsoftplus(x); }
    static V sigmoid(const V& x) { return vsigmoid(x); }
    static V sin(const V& x) { return vsin(x); }
    static V cos(const V& x) { return vcos(x); }
    static V concat(const V& a, const V& b) { return concat_cols(a, b); }
    static V slice(const V& a, int c0, int c1) { return slice_cols(a, c0, c1); }
    static V scale(const V& a, double s) { return warpfield::scale(a, s); }
    static V shift(const V& a, double s) { return warpfield::shift(a, s); }
    static V mul(const V& a, const V& b) { return warpfield::mul(a, b); }
    static V broadcast(const V& a, int cols) { return broadcast_cols(a, cols); }
    static int rows(const V& a) { return a.rows(); }
};

struct DualPlainOps {
    using V = DualTensor;
    using P = Tensor;
    static V linear(const V& x, const P& w, const P& b) {
        return dualops::add_bias(dualops::matmul(x, w), b);
    }
    static V relu(const V& x) { return dualops::relu(x); }
    static V tanh(const V& x) { return dualops::tanh(x); }
    static V concat(const V& a, const V& b) { return dualops::concat_cols(a, b); }
    static V scale(const V& a, double s) { return dualops::scale(a, s); }
    static V shift(const V& a, double s) { return dualops::shift(a, s); }
    static V mul(const V& a, const V& b) { return dualops::mul(a, b); }
    static V broadcast(const V& a, int cols) { return dualops::broadcast_cols(a, cols); }
    static int rows(const V& a) { return a.v.rows(); }
};

struct DualTapeOps {
    using V = DualVar;
    using P = Var;
    static V linear(const V& x, const P& w, const P& b) {
        return dualops::add_bias(dualops::matmul(x, w), b);
    }
    static V relu(const V& x) { return dualops::relu(x); }
    static V tanh(const V& x) { return dualops::tanh(x); }
    static V concat(const V& a, const V& b) { return dualops::concat_cols(a, b); }
    static V scale(const V& a, double s) { return dualops::scale(a, s); }
    static V shift(const V& a, double s) { return dualops::shift(a, s); }
    static V mul(const V& a, const V& b) { return dualops::mul(a, b); }
    static V broadcast(const V& a, int cols) { return dualops::broadcast_cols(a, cols); }
    static int rows(const V& a) { return a.v.rows(); }
};

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

struct EncodingConfig {
    int bands = 10;
    bool include_raw = true;

    int encoded_dim(int input_dim) const { return input_dim * (2 * bands + (include_raw ? 1 : 0)); }
};

// [raw x] ++ [sin(2^k pi x), cos(2^k pi x)]_{k=0..L-1}, blocks over all coords
template <class O> typename O::V encode_position(const EncodingConfig& cfg, const typename O::V& x) {
    using V = typename O::V;
    bool have = false;
    V out{};
    if (cfg.include_raw) {
        out = x;
        have = true;
    }
    double freq = 3.14159265358979323846;
    for (int k = 0; k < cfg.bands; ++k, freq *= 2.0) {
        V scaled = O::scale(x, freq);
        V s = O::sin(scaled);
        V c = O::cos(scaled);
        out = have ? O::concat(out, s) : s;
        have = true;
        out = O::concat(out, c);
    }
    if (!have) throw UsageError("encode_position: zero bands without raw input yields empty encoding");
    return out;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class P> struct MlpOf {
    std::vector<P> w; // each [in,out]
    std::vector<P> b; // each [1,out]
    int layers() const { return int(w.size()); }
};
using Mlp = MlpOf<Tensor>;
using MlpVars = MlpOf<Var>;

enum class ViewDependence { off, approximate, exact };

struct ModelConfig {
    int canonical_width = 256;
    int canonical_depth = 8; // hidden layers before the 4-channel head
    int canonical_skip = 4;  // hidden layer whose input re-concatenates the encoding (<0: none)
    EncodingConfig encoding{10, true};
    int latent_count = 0;
    int latent_dim = 32;
    int bending_width = 64;
    int bending_layers = 5; // total linear layers, final one zero-initialized
    int rigidity_width = 32;
    int rigidity_layers = 3;
    bool bending_enabled = true;
    bool rigidity_enabled = true;
    bool naive_conditioning = false; // latent concatenated to canonical input, bending off
    ViewDependence view_dependence = ViewDependence::off;
    EncodingConfig dir_encoding{4, true};
    int view_head_width = 128;

    int canonical_input_dim() const {
        return encoding.encoded_dim(3) + (naive_conditioning ? latent_dim : 0);
    }
    bool has_view_head() const { return view_dependence != ViewDependence::off; }

    void validate() const {
        if (canonical_width < 1 || canonical_depth < 1) throw UsageError("canonical sizes must be positive");
        if (canonical_skip >= canonical_depth) throw UsageError("canonical skip layer out of range");
        if (encoding.bands < 0) throw UsageError("encoding bands must be nonnegative");
        if (latent_count < 0 || latent_dim < 1) throw UsageError("invalid latent table shape");
        if (bending_width < 1 || bending_layers < 2) throw UsageError("invalid bending network shape");
        if (rigidity_width < 1 || rigidity_layers < 2) throw UsageError("invalid rigidity network shape");
        if (has_view_head() && view_head_width < 1) throw UsageError("invalid view head width");
    }
};

struct SceneModel {
    ModelConfig cfg;
    Mlp canonical_coarse, canonical_fine;
    Mlp bending;  // input [3 + latent_dim] -> 3
    Mlp rigidity; // input [3] -> 1
    Mlp view_head_coarse, view_head_fine;
    Tensor latents; // [latent_count, latent_dim]
    std::vector<std::uint8_t> latent_is_test;
};

inline Tensor fanin_init(int in, int out, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(in));
    return random_uniform(in, out, -bound, bound, rng);
}

namespace detail {

inline Mlp make_mlp(const std::vector<int>& dims, bool zero_final, Rng& rng) {
    Mlp m;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        bool final_layer = (i + 2 == dims.size());
        if (final_layer && zero_final) {
            m.w.push_back(Tensor(dims[i], dims[i + 1]));
            m.b.push_back(Tensor(1, dims[i + 1]));
        } else {
            m.w.push_back(fanin_init(dims[i], dims[i + 1], rng));
            m.b.push_back(Tensor(1, dims[i + 1]));
        }
    }
    return m;
}

inline std::vector<int> canonical_dims(const ModelConfig& cfg) {
    std::vector<int> dims;
    dims.push_back(cfg.canonical_input_dim());
    for (int i = 0; i < cfg.canonical_depth; ++i) dims.push_back(cfg.canonical_width);
    dims.push_back(4); // density + rgb head
    return dims;
}

} // namespace detail

inline SceneModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SceneModel m;
    m.cfg = cfg;

    auto dims = detail::canonical_dims(cfg);
    // the skip layer's weight matrix takes [width + input] rows
    auto cdims_at = [&](int layer) {
        int in = dims[std::size_t(layer)];
        if (layer == cfg.canonical_skip && layer > 0) in += cfg.canonical_input_dim();
        return in;
    };
    auto init_canonical = [&](Stream s) {
        Rng rng = derive_rng(seed, s);
        Mlp net;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            net.w.push_back(fanin_init(cdims_at(int(i)), dims[i + 1], rng));
            net.b.push_back(Tensor(1, dims[i + 1]));
        }
        return net;
    };
    m.canonical_coarse = init_canonical(Stream::init_canonical_coarse);
    m.canonical_fine = init_canonical(Stream::init_canonical_fine);

    {
        Rng rng = derive_rng(seed, Stream::init_bending);
        std::vector<int> bd;
        bd.push_back(3 + cfg.latent_dim);
        for (int i = 0; i < cfg.bending_layers - 1; ++i) bd.push_back(cfg.bending_width);
        bd.push_back(3);
        m.bending = detail::make_mlp(bd, /*zero_final=*/true, rng);
    }
    {
        Rng rng = derive_rng(seed, Stream::init_rigidity);
        std::vector<int> rd;
        rd.push_back(3);
        for (int i = 0; i < cfg.rigidity_layers - 1; ++i) rd.push_back(cfg.rigidity_width);
        rd.push_back(1);
        m.rigidity = detail::make_mlp(rd, /*zero_final=*/true, rng);
    }
    if (cfg.has_view_head()) {
        Rng rng = derive_rng(seed, Stream::init_view_head);
        int in = cfg.canonical_width + cfg.dir_encoding.encoded_dim(3);
        m.view_head_coarse = detail::make_mlp({in, cfg.view_head_width, 3}, false, rng);
        m.view_head_fine = detail::make_mlp({in, cfg.view_head_width, 3}, false, rng);
    }

    m.latents = Tensor(cfg.latent_count, cfg.latent_dim);
    m.latent_is_test.assign(std::size_t(std::max(cfg.latent_count, 0)), 0);
    return m;
}

// ---------------------------------------------------------------------------
// Forward passes (generic over backend)
// ---------------------------------------------------------------------------

template <class O, class P> struct CanonicalRaw {
    typename O::V feature; // last hidden activation [N,W]
    typename O::V head;    // [N,4]: raw density | raw rgb
};

template <class O, class P>
CanonicalRaw<O, P> canonical_trunk(const MlpOf<P>& net, const typename O::V& enc, int skip) {
    using V = typename O::V;
    V h = enc;
    int hidden = net.layers() - 1;
    for (int i = 0; i < hidden; ++i) {
        V in = (i == skip && i > 0) ? O::concat(h, enc) : h;
        h = O::relu(O::linear(in, net.w[std::size_t(i)], net.b[std::size_t(i)]));
    }
    V head = O::linear(h, net.w[std::size_t(hidden)], net.b[std::size_t(hidden)]);
    return {h, head};
}

template <class O, class P> struct CanonicalEval {
    typename O::V sigma; // [N,1], nonnegative
    typename O::V rgb;   // [N,3], in [0,1]
    typename O::V feature;
};

template <class O, class P>
CanonicalEval<O, P> canonical_forward(const MlpOf<P>& net, const typename O::V& enc, int skip) {
    auto raw = canonical_trunk<O, P>(net, enc, skip);
    CanonicalEval<O, P> out;
    out.sigma = O::softplus(O::slice(raw.head, 0, 1));
    out.rgb = O::sigmoid(O::slice(raw.head, 1, 4));
    out.feature = raw.feature;
    return out;
}

// color from trunk feature + encoded view direction
template <class O, class P>
typename O::V view_head_forward(const MlpOf<P>& net, const typename O::V& feature,
                                const typename O::V& enc_dir) {
    typename O::V h = O::relu(O::linear(O::concat(feature, enc_dir), net.w[0], net.b[0]));
    return O::sigmoid(O::linear(h, net.w[1], net.b[1]));
}

// input must already be [N, 3 + latent_dim]
template <class O, class P>
typename O::V bending_forward(const MlpOf<P>& net, const typename O::V& input) {
    using V = typename O::V;
    V h = input;
    for (int i = 0; i + 1 < net.layers(); ++i)
        h = O::relu(O::linear(h, net.w[std::size_t(i)], net.b[std::size_t(i)]));
    return O::linear(h, net.w.back(), net.b.back());
}

// raw 3-D points in, w in [0,1] out
template <class O, class P>
typename O::V rigidity_forward(const MlpOf<P>& net, const typename O::V& x) {
    using V = typename O::V;
    V h = x;
    for (int i = 0; i + 1 < net.layers(); ++i)
        h = O::relu(O::linear(h, net.w[std::size_t(i)], net.b[std::size_t(i)]));
    V out = O::linear(h, net.w.back(), net.b.back());
    return O::shift(O::scale(O::tanh(out), 0.5), 0.5);
}

// ---------------------------------------------------------------------------
// Plain convenience wrappers
// ---------------------------------------------------------------------------

enum class FieldKind { coarse, fine };

struct FieldValues {
    Tensor rgb;   // [N,3]
    Tensor sigma; // [N,1]
};

inline FieldValues eval_canonical(const SceneModel& m, const Tensor& points, FieldKind which) {
    if (points.cols() != 3) throw UsageError("eval_canonical: points must be [N,3]");
    if (!points.all_finite()) throw NumericError("eval_canonical: non-finite input point");
    if (m.cfg.naive_conditioning)
        throw UsageError("eval_canonical: naive-conditioning model needs a latent; use the render path");
    Tensor enc = encode_position<PlainOps>(m.cfg.encoding, points);
    auto out = canonical_forward<PlainOps, Tensor>(
        which == FieldKind::coarse ? m.canonical_coarse : m.canonical_fine, enc, m.cfg.canonical_skip);
    return {out.rgb, out.sigma};
}

inline Tensor latent_rows_for(const SceneModel& m, const Tensor& latent, int n) {
    if (latent.cols() != m.cfg.latent_dim)
        throw UsageError("latent dimension mismatch: got " + std::to_string(latent.cols()) +
                         ", table uses " + std::to_string(m.cfg.latent_dim));
    if (latent.rows() == n) return latent;
    if (latent.rows() == 1) return broadcast_rows(latent, n);
    throw UsageError("latent row count must be 1 or match the point count");
}

inline Tensor eval_bending(const SceneModel& m, const Tensor& points, const Tensor& latent) {
    if (points.cols() != 3) throw UsageError("eval_bending: points must be [N,3]");
    Tensor lat = latent_rows_for(m, latent, points.rows());
    return bending_forward<PlainOps, Tensor>(m.bending, concat_cols(points, lat));
}

inline Tensor eval_rigidity(const SceneModel& m, const Tensor& points) {
    if (points.cols() != 3) throw UsageError("eval_rigidity: points must be [N,3]");
    return rigidity_forward<PlainOps, Tensor>(m.rigidity, points);
}

// ---------------------------------------------------------------------------
// Parameter enumeration (fixed order shared by optimizer and checkpoints)
// ---------------------------------------------------------------------------

using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

namespace detail {
inline void collect_mlp(Mlp& m, const std::string& sec, ParamRefs& out) {
    for (int i = 0; i < m.layers(); ++i) {
        out.emplace_back(sec + "/w" + std::to_string(i), &m.w[std::size_t(i)]);
        out.emplace_back(sec + "/b" + std::to_string(i), &m.b[std::size_t(i)]);
    }
}
} // namespace detail

inline ParamRefs param_refs(SceneModel& m) {
    ParamRefs out;
    detail::collect_mlp(m.canonical_coarse, "canonical_coarse", out);
    detail::collect_mlp(m.canonical_fine, "canonical_fine", out);
    detail::collect_mlp(m.bending, "bending", out);
    detail::collect_mlp(m.rigidity, "rigidity", out);
    if (m.cfg.has_view_head()) {
        detail::collect_mlp(m.view_head_coarse, "view_head_coarse", out);
        detail::collect_mlp(m.view_head_fine, "view_head_fine", out);
    }
    out.emplace_back("latents", &m.latents);
    return out;
}

// ---------------------------------------------------------------------------
// Tape registration
// ---------------------------------------------------------------------------

struct TrainMask {
    bool canonical = true;
    bool bending = true;
    bool rigidity = true;
    bool latents = true;
    bool view = true;
};

struct TapeModel {
    const SceneModel* source = nullptr;
    MlpVars canonical_coarse, canonical_fine, bending, rigidity;
    MlpVars view_head_coarse, view_head_fine;
    Var latents;
};

namespace detail {
inline MlpVars register_mlp(Tape& tape, const Mlp& m, bool requires_grad) {
    MlpVars v;
    for (int i = 0; i < m.layers(); ++i) {
        v.w.push_back(tape.leaf(m.w[std::size_t(i)], requires_grad));
        v.b.push_back(tape.leaf(m.b[std::size_t(i)], requires_grad));
    }
    return v;
}
} // namespace detail

inline TapeModel register_model(Tape& tape, const SceneModel& m, const TrainMask& mask = {}) {
    TapeModel t;
    t.source = &m;
    t.canonical_coarse = detail::register_mlp(tape, m.canonical_coarse, mask.canonical);
    t.canonical_fine = detail::register_mlp(tape, m.canonical_fine, mask.canonical);
    t.bending = detail::register_mlp(tape, m.bending, mask.bending);
    t.rigidity = detail::register_mlp(tape, m.rigidity, mask.rigidity);
    if (m.cfg.has_view_head()) {
        t.view_head_coarse = detail::register_mlp(tape, m.view_head_coarse, mask.view);
        t.view_head_fine = detail::register_mlp(tape, m.view_head_fine, mask.view);
    }
    t.latents = tape.leaf(m.latents, mask.latents);
    return t;
}

// aligned with param_refs(model); names must match entry for entry
inline std::vector<std::pair<std::string, Var>> tape_param_vars(const SceneModel& m, TapeModel& t) {
    std::vector<std::pair<std::string, Var>> out;
    auto collect = [&](MlpVars& mv, const std::string& sec) {
        for (int i = 0; i < mv.layers(); ++i) {
            out.emplace_back(sec + "/w" + std::to_string(i), mv.w[std::size_t(i)]);
            out.emplace_back(sec + "/b" + std::to_string(i), mv.b[std::size_t(i)]);
        }
    };
    collect(t.canonical_coarse, "canonical_coarse");
    collect(t.canonical_fine, "canonical_fine");
    collect(t.bending, "bending");
    collect(t.rigidity, "rigidity");
    if (m.cfg.has_view_head()) {
        collect(t.view_head_coarse, "view_head_coarse");
        collect(t.view_head_fine, "view_head_fine");
    }
    out.emplace_back("latents", t.latents);
    return out;
}

} // namespace warpfield
