#include "sdiff/denoiser.hpp"

#include "sdiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdiff {

const char* temporal_name(TemporalKind k) { return k == TemporalKind::sti ? "sti" : "conv3d"; }

TemporalKind temporal_of(const std::string& name) {
    if (name == "sti") return TemporalKind::sti;
    if (name == "conv3d") return TemporalKind::conv3d;
    throw std::invalid_argument("unknown temporal block '" + name + "'");
}

void DenoiserConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("DenoiserConfig: " + m); };
    if (gamma != 1 && gamma != 2 && gamma != 4) fail("gamma must be 1, 2 or 4");
    if (height % gamma != 0 || width % gamma != 0) fail("gamma must divide the extents");
    if (conv_window % 2 == 0) fail("conv window must be odd");
    if (heads < 1 || d % heads != 0) fail("feature width must be divisible by heads");
    if (blocks < 1) fail("at least one temporal block");
    if (frames_max < 3) fail("frames_max too small");
    if (vocab < kTokenCount) fail("vocabulary smaller than the token set");
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& [n, t] : items)
        if (n == name) return t;
    throw std::out_of_range("no parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return t;
    throw std::out_of_range("no parameter '" + name + "'");
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return true;
    return false;
}

size_t ParamSet::scalar_count() const {
    size_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
}

ParamSet init_params(const DenoiserConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamSet p;
    const int d = cfg.d;
    const int cin = cfg.guidance_channels();
    auto gauss = [&](std::vector<int> shape, double stddev) {
        return Tensor::gaussian(std::move(shape), rng, stddev);
    };

    p.items.emplace_back("in.w", gauss({cin, d}, 1.0 / std::sqrt(double(cin))));
    p.items.emplace_back("in.b", Tensor::zeros({d}));
    p.items.emplace_back("time.w", gauss({d, d}, 1.0 / std::sqrt(double(d))));
    p.items.emplace_back("time.b", Tensor::zeros({d}));
    p.items.emplace_back("text.table", gauss({cfg.vocab, d}, 1.0 / std::sqrt(double(d))));
    p.items.emplace_back("text.w", gauss({d, d}, 1.0 / std::sqrt(double(d))));
    p.items.emplace_back("text.b", Tensor::zeros({d}));
    p.items.emplace_back("pos.table", gauss({cfg.frames_max, d}, 0.02));

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        if (cfg.temporal == TemporalKind::sti) {
            const double ws = 1.0 / std::sqrt(double(d));
            p.items.emplace_back(pre + "attn.wq", gauss({d, d}, ws));
            p.items.emplace_back(pre + "attn.wk", gauss({d, d}, ws));
            p.items.emplace_back(pre + "attn.wv", gauss({d, d}, ws));
            p.items.emplace_back(pre + "attn.wo", gauss({d, d}, ws));
            p.items.emplace_back(pre + "conv.k",
                                 gauss({d, cfg.conv_window},
                                       1.0 / std::sqrt(double(cfg.conv_window))));
            p.items.emplace_back(pre + "ln_a.g", Tensor::full({d}, 1.0));
            p.items.emplace_back(pre + "ln_a.b", Tensor::zeros({d}));
            p.items.emplace_back(pre + "ln_b.g", Tensor::full({d}, 1.0));
            p.items.emplace_back(pre + "ln_b.b", Tensor::zeros({d}));
            // zero init: the block starts as the identity
            p.items.emplace_back(pre + "fuse.w", Tensor::zeros({2 * d, d}));
            p.items.emplace_back(pre + "fuse.b", Tensor::zeros({d}));
        } else {
            // delta kernel: the block starts as the identity
            Tensor k({d, 3, 3, 3});
            for (int c = 0; c < d; ++c) k.mutable_data()[size_t(c) * 27 + 13] = 1.0;
            p.items.emplace_back(pre + "conv3.k", std::move(k));
        }
    }

    p.items.emplace_back("out.w", gauss({d, cfg.channels}, 1.0 / std::sqrt(double(d))));
    p.items.emplace_back("out.b", Tensor::zeros({cfg.channels}));
    return p;
}

Var ParamVars::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::out_of_range("no watched parameter '" + name + "'");
    return it->second;
}

ParamVars watch(Tape& tape, const ParamSet& params) {
    ParamVars v;
    for (const auto& [name, t] : params.items) v.vars.emplace(name, tape.leaf(t));
    return v;
}

// ---------------------------------------------------------------------------
// guidance packing and text pathway
// ---------------------------------------------------------------------------

GuidancePack pack_guidance(const Tensor& noisy, const SpriteClip& clip,
                           const ConditionMask& cmask, int t) {
    const int f = clip.frame_count(), c = clip.channels();
    const int h = noisy.dim(1), w = noisy.dim(2);
    if (noisy.ndim() != 4 || noisy.dim(0) != f || noisy.dim(3) != c)
        throw std::invalid_argument("pack_guidance: noisy " + noisy.shape_str() +
                                    " does not match the clip");

    // reference = frame 0, average-pooled down when larger than the frames
    Tensor ref({1, clip.height(), clip.width(), c});
    std::copy(clip.frames.data(), clip.frames.data() + ref.size(), ref.mutable_data());
    while (ref.dim(1) > h || ref.dim(2) > w) {
        if (ref.dim(1) % 2 != 0 || ref.dim(2) % 2 != 0)
            throw std::invalid_argument("pack_guidance: reference extents not reducible to " +
                                        noisy.shape_str());
        Tensor half({1, ref.dim(1) / 2, ref.dim(2) / 2, c});
        kernels::avg_pool2d(ref.data(), half.mutable_data(), 1, ref.dim(1), ref.dim(2), c, 2);
        ref = std::move(half);
    }
    if (ref.dim(1) != h || ref.dim(2) != w)
        throw std::invalid_argument("pack_guidance: reference smaller than the frames");

    const MaskedViews views = apply_masks(clip, cmask);

    const int cin = 3 * c + 1;
    GuidancePack pack;
    pack.t = t;
    pack.caption = clip.caption;
    pack.text_active = cmask.text_active;
    Tensor input({f, h, w, cin});
    double* dst = input.mutable_data();
    const size_t hw = size_t(h) * w;
    for (int fi = 0; fi < f; ++fi)
        for (size_t px = 0; px < hw; ++px) {
            double* cell = dst + (size_t(fi) * hw + px) * cin;
            const size_t src = (size_t(fi) * hw + px) * c;
            for (int ci = 0; ci < c; ++ci) cell[ci] = noisy[src + ci];
            for (int ci = 0; ci < c; ++ci) cell[c + ci] = ref[px * c + ci];
            for (int ci = 0; ci < c; ++ci) cell[2 * c + ci] = views.guidance[src + ci];
            cell[3 * c] = views.keep_plane[size_t(fi) * hw + px];
        }
    pack.input = std::move(input);
    return pack;
}

std::vector<int> augment_text(const std::vector<int>& tokens, double p, Rng& rng) {
    if (p < 0 || p > 1) throw std::invalid_argument("augment_text: probability outside [0,1]");
    std::vector<int> out = tokens;
    for (int& tok : out)
        if (rng.uniform() < p) tok = kHashToken;
    return out;
}

Var embed_text(Tape& tape, const std::vector<int>& tokens, Var table, Var proj_w, Var proj_b) {
    const int vocab = table.val().dim(0);
    if (tokens.empty()) throw std::invalid_argument("embed_text: empty caption");
    for (int tok : tokens)
        if (tok < 0 || tok >= vocab)
            throw std::invalid_argument("embed_text: token " + std::to_string(tok) +
                                        " outside vocabulary of " + std::to_string(vocab));
    // mean pooling as a constant row times the table keeps the gradient path
    // on the ordinary matmul rule
    Tensor pool({1, vocab});
    for (int tok : tokens) pool.mutable_data()[size_t(tok)] += 1.0 / double(tokens.size());
    Var pooled = matmul(tape.leaf(pool), table);
    return linear(pooled, proj_w, proj_b);
}

Tensor sinusoidal_embedding(int t, int d) {
    Tensor e({1, d});
    double* v = e.mutable_data();
    const int half = d / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        v[2 * i] = std::sin(t * freq);
        v[2 * i + 1] = std::cos(t * freq);
    }
    if (d % 2 == 1) v[d - 1] = 0;
    return e;
}

// ---------------------------------------------------------------------------
// temporal blocks
// ---------------------------------------------------------------------------

Var sti_forward(Tape& tape, Var h, const ParamVars& params, const std::string& prefix,
                const DenoiserConfig& cfg) {
    ScopeGuard scope(tape, prefix + "sti");
    const Tensor hv = h.val();
    if (hv.ndim() != 4) throw std::invalid_argument("sti_forward: input not rank 4");
    const int f = hv.dim(0), hh = hv.dim(1), ww = hv.dim(2), d = hv.dim(3);
    if (hh % cfg.gamma != 0 || ww % cfg.gamma != 0)
        throw std::invalid_argument("sti_forward: gamma does not divide " + hv.shape_str());

    // semantic branch: pool, flatten frames and pixels into tokens, attend
    Var pooled = cfg.gamma > 1 ? avg_pool2d(h, cfg.gamma) : h;
    const int th = hh / cfg.gamma, tw = ww / cfg.gamma;
    const int tokens = f * th * tw;
    Var tok = reshape(pooled, {tokens, d});
    if (cfg.pos_emb) {
        // one-hot frame selector times the positional table scatters the
        // per-frame rows onto tokens
        Tensor sel({tokens, cfg.frames_max});
        for (int i = 0; i < tokens; ++i)
            sel.mutable_data()[size_t(i) * cfg.frames_max + (i / (th * tw))] = 1.0;
        tok = add(tok, matmul(tape.leaf(sel), params.at("pos.table")));
    }
    Var att = self_attention(tok, params.at(prefix + "attn.wq"), params.at(prefix + "attn.wk"),
                             params.at(prefix + "attn.wv"), params.at(prefix + "attn.wo"),
                             cfg.heads);
    Var sem = reshape(att, {f, th, tw, d});
    if (cfg.gamma > 1) sem = upsample2d_nearest(sem, cfg.gamma);

    // detail branch: channel-wise convolution at every site
    Var det = conv1d_channels(h, params.at(prefix + "conv.k"));

    Var na = layer_norm(sem, params.at(prefix + "ln_a.g"), params.at(prefix + "ln_a.b"));
    Var nb = layer_norm(det, params.at(prefix + "ln_b.g"), params.at(prefix + "ln_b.b"));
    Var fused = linear(concat_last({na, nb}), params.at(prefix + "fuse.w"),
                       params.at(prefix + "fuse.b"));
    return add(h, fused);
}

Var conv3d_block(Tape& tape, Var h, const ParamVars& params, const std::string& prefix) {
    ScopeGuard scope(tape, prefix + "conv3d");
    return conv3d_depthwise(h, params.at(prefix + "conv3.k"));
}

// ---------------------------------------------------------------------------
// full forward
// ---------------------------------------------------------------------------

Var denoise(Tape& tape, const GuidancePack& pack, const ParamVars& params,
            const DenoiserConfig& cfg) {
    const Tensor& in = pack.input;
    if (in.ndim() != 4 || in.dim(3) != cfg.guidance_channels())
        throw std::invalid_argument("denoise: pack input " + in.shape_str() +
                                    " does not match the config");
    const int f = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (f > cfg.frames_max)
        throw std::invalid_argument("denoise: clip longer than frames_max");
    const int sites = f * h * w;

    Var x;
    {
        ScopeGuard scope(tape, "stem");
        Var flat = reshape(tape.leaf(in), {sites, cfg.guidance_channels()});
        x = linear(flat, params.at("in.w"), params.at("in.b"));

        Var temb = linear(tape.leaf(sinusoidal_embedding(pack.t, cfg.d)), params.at("time.w"),
                          params.at("time.b"));
        x = add_rowvec(x, reshape(temb, {cfg.d}));
        if (pack.text_active) {
            Var text = embed_text(tape, pack.caption, params.at("text.table"),
                                  params.at("text.w"), params.at("text.b"));
            x = add_rowvec(x, reshape(text, {cfg.d}));
        }
        x = reshape(x, {f, h, w, cfg.d});
    }

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        x = cfg.temporal == TemporalKind::sti ? sti_forward(tape, x, params, prefix, cfg)
                                              : conv3d_block(tape, x, params, prefix);
    }

    {
        ScopeGuard scope(tape, "head");
        Var flat = reshape(x, {sites, cfg.d});
        Var out = linear(flat, params.at("out.w"), params.at("out.b"));
        return reshape(out, {f, h, w, cfg.channels});
    }
}

Tensor denoise_tensor(const GuidancePack& pack, const ParamSet& params,
                      const DenoiserConfig& cfg) {
    Tape tape;
    ParamVars vars = watch(tape, params);
    return denoise(tape, pack, vars, cfg).val();
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kMagic = 0x53444B43;  // "SDKC"
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void save_params(const std::string& path, const ParamSet& params, uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint " + path + " for writing");
    write_pod(out, kMagic);
    write_pod(out, kVersion);
    write_pod(out, config_hash);
    write_pod(out, uint32_t(params.items.size()));
    for (const auto& [name, t] : params.items) {
        write_pod(out, uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        write_pod(out, uint32_t(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) write_pod(out, int32_t(t.dim(i)));
    }
    for (const auto& [name, t] : params.items)
        out.write(reinterpret_cast<const char*>(t.data()),
                  std::streamsize(t.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write to checkpoint " + path);
}

ParamSet load_params(const std::string& path, uint64_t* config_hash_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    if (read_pod<uint32_t>(in) != kMagic)
        throw std::runtime_error("checkpoint " + path + ": bad magic");
    if (read_pod<uint32_t>(in) != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version");
    const uint64_t hash = read_pod<uint64_t>(in);
    if (config_hash_out) *config_hash_out = hash;
    const uint32_t count = read_pod<uint32_t>(in);
    ParamSet p;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint32_t ndim = read_pod<uint32_t>(in);
        std::vector<int> shape(ndim);
        for (uint32_t j = 0; j < ndim; ++j) shape[j] = read_pod<int32_t>(in);
        p.items.emplace_back(std::move(name), Tensor(shape));
    }
    for (auto& [name, t] : p.items) {
        in.read(reinterpret_cast<char*>(t.mutable_data()),
                std::streamsize(t.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint " + path + ": truncated payload");
        if (!t.all_finite())
            throw std::runtime_error("checkpoint " + path + ": non-finite parameter " + name);
    }
    return p;
}

}  // namespace sdiff
