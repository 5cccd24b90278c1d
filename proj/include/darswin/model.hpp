#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "darswin/image.hpp"
#include "darswin/lens.hpp"
#include "darswin/polar_grid.hpp"
#include "darswin/rng.hpp"
#include "darswin/sampling.hpp"
#include "darswin/tensor.hpp"

namespace darswin {

/// Desk-scale encoder-decoder over the polar token grid. Stage s of the
/// encoder runs `depths[s]` attention blocks at azimuth resolution
/// n_phi / merge_factor^s and width embed_dim * 2^s; the decoder mirrors the
/// stages with azimuth expansion and skip fusion. The last depths/heads entry
/// is the bottleneck.
struct ModelConfig {
    int n_r = 16;
    int n_phi = 64;
    int embed_dim = 8;
    std::vector<int> depths = {2, 2, 2, 2};
    std::vector<int> heads = {2, 2, 2, 2};
    int w_r = 4;
    int w_phi = 4;
    int merge_factor = 4;
    int head_out = 1;  // 1 = log-depth
    int s_r = 4;
    int s_phi = 25;
    int mlp_ratio = 4;

    int stages() const { return static_cast<int>(depths.size()); }
    int dim_at(int stage) const { return embed_dim << stage; }
    int phi_at(int stage) const {
        int p = n_phi;
        for (int s = 0; s < stage; ++s) p /= merge_factor;
        return p;
    }
    // Windows clamp to the grid so the bottleneck ring is a single cyclic window.
    int wr_at() const { return std::min(w_r, n_r); }
    int wphi_at(int stage) const { return std::min(w_phi, phi_at(stage)); }
};

inline void validate(const ModelConfig& cfg) {
    if (cfg.n_r < 1 || cfg.n_phi < 1 || cfg.embed_dim < 1 || cfg.head_out < 1 || cfg.s_r < 1 ||
        cfg.s_phi < 1 || cfg.mlp_ratio < 1)
        throw std::invalid_argument("model: config counts must be positive");
    if (cfg.depths.empty() || cfg.depths.size() != cfg.heads.size())
        throw std::invalid_argument("model: depths and heads must be non-empty and equal length");
    if (cfg.merge_factor != 4)
        throw std::invalid_argument("model: merge factor is fixed at 4 along azimuth");
    int phi = cfg.n_phi;
    for (int s = 0; s < cfg.stages(); ++s) {
        if (s > 0) {
            if (phi % cfg.merge_factor != 0)
                throw std::invalid_argument("model: n_phi=" + std::to_string(cfg.n_phi) +
                                            " not divisible by merge_factor^" + std::to_string(s));
            phi /= cfg.merge_factor;
        }
        const int wphi = std::min(cfg.w_phi, phi);
        if (phi % wphi != 0 || cfg.n_r % std::min(cfg.w_r, cfg.n_r) != 0)
            throw std::invalid_argument("model: window does not tile stage " + std::to_string(s) +
                                        " grid " + std::to_string(cfg.n_r) + "x" + std::to_string(phi));
        if (cfg.dim_at(s) % cfg.heads[s] != 0)
            throw std::invalid_argument("model: dim " + std::to_string(cfg.dim_at(s)) +
                                        " not divisible by heads " + std::to_string(cfg.heads[s]));
    }
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"n_r", c.n_r},       {"n_phi", c.n_phi},     {"embed_dim", c.embed_dim},
            {"depths", c.depths}, {"heads", c.heads},     {"w_r", c.w_r},
            {"w_phi", c.w_phi},   {"merge_factor", c.merge_factor},
            {"head_out", c.head_out}, {"s_r", c.s_r},     {"s_phi", c.s_phi},
            {"mlp_ratio", c.mlp_ratio}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_r = j.at("n_r").get<int>();
    c.n_phi = j.at("n_phi").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depths = j.at("depths").get<std::vector<int>>();
    c.heads = j.at("heads").get<std::vector<int>>();
    c.w_r = j.at("w_r").get<int>();
    c.w_phi = j.at("w_phi").get<int>();
    c.merge_factor = j.at("merge_factor").get<int>();
    c.head_out = j.at("head_out").get<int>();
    c.s_r = j.at("s_r").get<int>();
    c.s_phi = j.at("s_phi").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    validate(c);
    return c;
}

/// Named parameter tensors in registration (= checkpoint directory) order.
class ParamStore {
  public:
    Tensor add(const std::string& name, Shape shape, std::vector<double> init) {
        if (by_name_.count(name)) throw std::invalid_argument("model: duplicate parameter " + name);
        Tensor t = Tensor::leaf(std::move(shape), std::move(init), true);
        by_name_[name] = entries_.size();
        entries_.emplace_back(name, t);
        return t;
    }
    const Tensor& get(const std::string& name) const {
        const auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::invalid_argument("model: unknown parameter " + name);
        return entries_[it->second].second;
    }
    bool has(const std::string& name) const { return by_name_.count(name) != 0; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t total_values() const {
        std::size_t n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }
    void zero_grad() {
        for (auto& [name, t] : entries_) t.zero_grad();
    }

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> by_name_;
};

namespace modeldetail {

inline std::vector<double> trunc_normal_init(std::size_t n, Rng& rng, double sigma = 0.02) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.trunc_normal(sigma);
    return v;
}

inline void add_linear(ParamStore& ps, Rng& rng, const std::string& prefix, int in, int out) {
    ps.add(prefix + ".weight", {static_cast<std::size_t>(in), static_cast<std::size_t>(out)},
           trunc_normal_init(static_cast<std::size_t>(in) * out, rng));
    ps.add(prefix + ".bias", {static_cast<std::size_t>(out)},
           std::vector<double>(static_cast<std::size_t>(out), 0.0));
}

inline void add_norm(ParamStore& ps, const std::string& prefix, int dim) {
    ps.add(prefix + ".gamma", {static_cast<std::size_t>(dim)},
           std::vector<double>(static_cast<std::size_t>(dim), 1.0));
    ps.add(prefix + ".beta", {static_cast<std::size_t>(dim)},
           std::vector<double>(static_cast<std::size_t>(dim), 0.0));
}

inline Tensor linear(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
    return ops::add_rowvec(ops::matmul(x, ps.get(prefix + ".weight")), ps.get(prefix + ".bias"));
}

inline Tensor norm(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
    return ops::layer_norm_last(x, ps.get(prefix + ".gamma"), ps.get(prefix + ".beta"));
}

/// Window partition order and its inverse for an R x Phi token grid, cyclic
/// shift along azimuth folded into the index map.
struct WindowMap {
    std::shared_ptr<std::vector<std::uint32_t>> to_windows;
    std::shared_ptr<std::vector<std::uint32_t>> from_windows;
    int n_windows = 0;
    int tokens_per_window = 0;
};

inline WindowMap make_window_map(int R, int Phi, int wr, int wphi, int shift) {
    WindowMap wm;
    wm.tokens_per_window = wr * wphi;
    wm.n_windows = (R / wr) * (Phi / wphi);
    wm.to_windows = std::make_shared<std::vector<std::uint32_t>>();
    wm.to_windows->reserve(static_cast<std::size_t>(R) * Phi);
    for (int wi = 0; wi < R / wr; ++wi)
        for (int wj = 0; wj < Phi / wphi; ++wj)
            for (int r = wi * wr; r < (wi + 1) * wr; ++r)
                for (int p = wj * wphi; p < (wj + 1) * wphi; ++p) {
                    const int orig_p = (p + shift % Phi + Phi) % Phi;
                    wm.to_windows->push_back(static_cast<std::uint32_t>(r * Phi + orig_p));
                }
    wm.from_windows = std::make_shared<std::vector<std::uint32_t>>(wm.to_windows->size());
    for (std::size_t pos = 0; pos < wm.to_windows->size(); ++pos)
        (*wm.from_windows)[(*wm.to_windows)[pos]] = static_cast<std::uint32_t>(pos);
    return wm;
}

/// Relative-position pair indices for one window: entry (i, j) addresses the
/// bias row for (delta_r, delta_phi), the azimuthal difference reduced to its
/// minimal cyclic representative modulo Phi.
inline std::vector<std::uint32_t> make_bias_pair_index(int wr, int wphi, int Phi) {
    const int T = wr * wphi;
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(T) * T);
    for (int i = 0; i < T; ++i) {
        const int ri = i / wphi, pi = i % wphi;
        for (int j = 0; j < T; ++j) {
            const int rj = j / wphi, pj = j % wphi;
            const int dr = rj - ri + (wr - 1);
            int dp = pj - pi;
            dp = ((dp % Phi) + Phi) % Phi;
            if (dp > Phi / 2) dp -= Phi;
            idx[static_cast<std::size_t>(i) * T + j] =
                static_cast<std::uint32_t>(dr * (2 * wphi - 1) + dp + (wphi - 1));
        }
    }
    return idx;
}

}  // namespace modeldetail

/// Model instance: configuration plus its parameter store.
class DarSwinUnet {
  public:
    ModelConfig cfg;
    ParamStore params;

    static DarSwinUnet init(const ModelConfig& cfg, std::uint64_t seed) {
        validate(cfg);
        DarSwinUnet m;
        m.cfg = cfg;
        Rng rng(seed);
        using namespace modeldetail;
        auto& ps = m.params;
        add_linear(ps, rng, "embed", cfg.s_r * cfg.s_phi * 3, cfg.embed_dim);
        add_norm(ps, "embed.norm", cfg.embed_dim);
        const auto add_blocks = [&](const std::string& prefix, int stage) {
            const int d = cfg.dim_at(stage);
            const int wr = cfg.wr_at(), wphi = cfg.wphi_at(stage);
            const int table = (2 * wr - 1) * (2 * wphi - 1);
            for (int blk = 0; blk < cfg.depths[stage]; ++blk) {
                const std::string p = prefix + std::to_string(stage) + ".block" + std::to_string(blk);
                add_norm(ps, p + ".norm1", d);
                add_linear(ps, rng, p + ".attn.qkv", d, 3 * d);
                add_linear(ps, rng, p + ".attn.proj", d, d);
                ps.add(p + ".attn.bias_table",
                       {static_cast<std::size_t>(table), static_cast<std::size_t>(cfg.heads[stage])},
                       std::vector<double>(static_cast<std::size_t>(table) * cfg.heads[stage], 0.0));
                add_norm(ps, p + ".norm2", d);
                add_linear(ps, rng, p + ".mlp.fc1", d, cfg.mlp_ratio * d);
                add_linear(ps, rng, p + ".mlp.fc2", cfg.mlp_ratio * d, d);
            }
        };
        for (int s = 0; s < cfg.stages(); ++s) {
            add_blocks("enc", s);
            if (s + 1 < cfg.stages()) {
                add_linear(ps, rng, "merge" + std::to_string(s) + ".reduction", 4 * cfg.dim_at(s),
                           2 * cfg.dim_at(s));
                add_norm(ps, "merge" + std::to_string(s) + ".norm", 2 * cfg.dim_at(s));
            }
        }
        for (int s = cfg.stages() - 2; s >= 0; --s) {
            add_linear(ps, rng, "expand" + std::to_string(s), cfg.dim_at(s + 1), 2 * cfg.dim_at(s + 1));
            add_linear(ps, rng, "fuse" + std::to_string(s), 2 * cfg.dim_at(s), cfg.dim_at(s));
            add_blocks("dec", s);
        }
        add_linear(ps, rng, "head", cfg.embed_dim, cfg.head_out);
        return m;
    }

    Tensor attention_block(const std::string& prefix, const Tensor& x, int R, int Phi,
                           int stage, bool shifted) const {
        using namespace ops;
        using namespace modeldetail;
        const int d = cfg.dim_at(stage);
        const int H = cfg.heads[stage];
        const int dh = d / H;
        const int wr = cfg.wr_at(), wphi = cfg.wphi_at(stage);
        const int shift = shifted ? wphi / 2 : 0;
        const WindowMap wm = make_window_map(R, Phi, wr, wphi, shift);
        const std::size_t nW = wm.n_windows, T = wm.tokens_per_window;

        Tensor xw = gather_rows(x, wm.to_windows);
        Tensor h = norm(params, prefix + ".norm1", xw);
        Tensor qkv = linear(params, prefix + ".attn.qkv", h);
        qkv = reshape(qkv, {nW, T, 3 * static_cast<std::size_t>(d)});
        const auto split_head = [&](std::size_t part) {
            Tensor t = slice(qkv, 2, part * d, d);
            t = reshape(t, {nW, T, static_cast<std::size_t>(H), static_cast<std::size_t>(dh)});
            t = permute(t, {0, 2, 1, 3});
            return reshape(t, {nW * H, T, static_cast<std::size_t>(dh)});
        };
        Tensor q = split_head(0), k = split_head(1), v = split_head(2);
        Tensor scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(double(dh)));

        Tensor bias = gather_rows(params.get(prefix + ".attn.bias_table"),
                                  make_bias_pair_index(wr, wphi, Phi));
        bias = permute(reshape(bias, {T, T, static_cast<std::size_t>(H)}), {2, 0, 1});
        bias = reshape(tile0(bias, nW), {nW * H, T, T});
        Tensor attn = softmax_last(add(scores, bias));

        Tensor out = matmul(attn, v);
        out = reshape(out, {nW, static_cast<std::size_t>(H), T, static_cast<std::size_t>(dh)});
        out = reshape(permute(out, {0, 2, 1, 3}), {nW * T, static_cast<std::size_t>(d)});
        out = linear(params, prefix + ".attn.proj", out);
        Tensor res = add(x, gather_rows(out, wm.from_windows));

        Tensor m = norm(params, prefix + ".norm2", res);
        m = linear(params, prefix + ".mlp.fc1", m);
        m = linear(params, prefix + ".mlp.fc2", gelu(m));
        return add(res, m);
    }

    Tensor run_stage(const std::string& kind, int stage, Tensor x, int R, int Phi) const {
        for (int blk = 0; blk < cfg.depths[stage]; ++blk)
            x = attention_block(kind + std::to_string(stage) + ".block" + std::to_string(blk), x, R,
                                Phi, stage, blk % 2 == 1);
        return x;
    }

    Tensor azimuth_merge(int stage, const Tensor& x, int R, int Phi) const {
        using namespace ops;
        if (Phi % 4 != 0)
            throw std::invalid_argument("model: azimuth merge needs Phi divisible by 4, got " +
                                        std::to_string(Phi));
        const std::size_t d = x.shape()[1];
        Tensor y = reshape(x, {static_cast<std::size_t>(R) * Phi / 4, 4 * d});
        y = modeldetail::linear(params, "merge" + std::to_string(stage) + ".reduction", y);
        return modeldetail::norm(params, "merge" + std::to_string(stage) + ".norm", y);
    }

    Tensor azimuth_expand(int stage, const Tensor& x) const {
        using namespace ops;
        const std::size_t d = x.shape()[1];
        if (d % 2 != 0 || d / 2 < 1)
            throw std::invalid_argument("model: azimuth expand needs even width, got " +
                                        std::to_string(d));
        Tensor y = modeldetail::linear(params, "expand" + std::to_string(stage), x);
        return reshape(y, {x.shape()[0] * 4, d / 2});
    }

    Tensor skip_fuse(int stage, const Tensor& dec, const Tensor& enc) const {
        using namespace ops;
        ops::check_same_shape(dec, enc, "skip_fuse");
        Tensor y = concat(dec, enc, 1);
        return modeldetail::linear(params, "fuse" + std::to_string(stage), y);
    }

    /// Polar samples [n_r * n_phi, s_r * s_phi * 3] -> tokens [n_r * n_phi, c].
    Tensor patch_embed(const Tensor& samples) const {
        Tensor t = modeldetail::linear(params, "embed", samples);
        return modeldetail::norm(params, "embed.norm", t);
    }

    /// Encoder-decoder over embedded tokens; returns final decoder tokens
    /// [n_r * n_phi, embed_dim].
    Tensor backbone(Tensor tokens) const {
        const int R = cfg.n_r;
        std::vector<Tensor> skips;
        int Phi = cfg.n_phi;
        Tensor x = std::move(tokens);
        for (int s = 0; s < cfg.stages(); ++s) {
            if (s > 0) {
                x = azimuth_merge(s - 1, x, R, Phi);
                Phi /= cfg.merge_factor;
            }
            x = run_stage("enc", s, x, R, Phi);
            if (s + 1 < cfg.stages()) skips.push_back(x);
        }
        for (int s = cfg.stages() - 2; s >= 0; --s) {
            x = azimuth_expand(s, x);
            Phi *= cfg.merge_factor;
            x = skip_fuse(s, x, skips[s]);
            x = run_stage("dec", s, x, R, Phi);
        }
        return x;
    }
};

/// Forward products: per-valid-pixel prediction column plus the geometry
/// needed to paint it back into an image or feed a loss.
struct ForwardResult {
    Tensor pred;                         // [valid_count, head_out]
    Tensor tokens;                       // [n_r * n_phi, c] pre-k-NN decoder tokens
    std::vector<std::uint32_t> pixels;   // flat y * w + x per prediction row
    PixelMask mask;
    int h = 0, w = 0;
};

/// Full pipeline on one image. The k-NN gather composes "replicate the patch
/// token to its sample points" with "average the k nearest samples", so each
/// pixel reads straight from its neighbors' patch tokens.
inline ForwardResult forward(const DarSwinUnet& model, const Image& image, const PolarGrid& grid,
                             const KnnIndex& knn) {
    using namespace ops;
    const ModelConfig& cfg = model.cfg;
    if (grid.n_r != cfg.n_r || grid.n_phi != cfg.n_phi || grid.s_r != cfg.s_r ||
        grid.s_phi != cfg.s_phi)
        throw std::invalid_argument("model: grid patches do not match config");
    if (image.c != 3)
        throw std::invalid_argument("model: expected a 3-channel image, got " +
                                    std::to_string(image.c));

    const std::vector<double> polar = bilinear_sample(image, grid);
    const std::size_t n_p = static_cast<std::size_t>(grid.patches());
    Tensor input = Tensor::leaf({n_p, static_cast<std::size_t>(grid.samples_per_patch() * image.c)},
                                polar, false);
    Tensor tokens = model.backbone(model.patch_embed(input));

    ForwardResult out;
    out.mask = knn.mask;
    out.h = image.h;
    out.w = image.w;
    out.pixels.reserve(knn.mask.count());
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (knn.mask.at(y, x)) out.pixels.push_back(static_cast<std::uint32_t>(y) * image.w + x);

    const std::size_t pv = out.pixels.size();
    std::vector<std::vector<std::uint32_t>> neighbor_patch(knn.k,
                                                           std::vector<std::uint32_t>(pv));
    for (std::size_t i = 0; i < pv; ++i) {
        const std::uint32_t* nb = knn.neighbors.data() + static_cast<std::size_t>(out.pixels[i]) * knn.k;
        for (int j = 0; j < knn.k; ++j)
            neighbor_patch[j][i] = static_cast<std::uint32_t>(grid.patch_of_sample(nb[j]));
    }
    Tensor acc = gather_rows(tokens, std::move(neighbor_patch[0]));
    for (int j = 1; j < knn.k; ++j) acc = add(acc, gather_rows(tokens, std::move(neighbor_patch[j])));
    Tensor pixel_feat = scale(acc, 1.0 / knn.k);
    out.pred = modeldetail::linear(model.params, "head", pixel_feat);
    out.tokens = tokens;
    return out;
}

/// Paint a forward result into an image; invalid pixels are zero.
inline Image paint(const ForwardResult& fr, int channel = 0) {
    Image img(fr.h, fr.w, 1, 0.0);
    const std::size_t ho = fr.pred.shape()[1];
    for (std::size_t i = 0; i < fr.pixels.size(); ++i)
        img.data[fr.pixels[i]] = fr.pred.value()[i * ho + channel];
    return img;
}

/// Differentiable scale-invariant log loss over the valid pixels.
inline Tensor si_log_loss_tensor(const Tensor& pred, const std::vector<double>& gt_log,
                                 double lambda = 0.85) {
    using namespace ops;
    if (pred.size() != gt_log.size())
        throw std::invalid_argument("model: loss size mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(gt_log.size()));
    Tensor target = Tensor::leaf(pred.shape(), gt_log, false);
    Tensor d = sub(pred, target);
    Tensor mean_sq = mean_all(mul(d, d));
    Tensor mean = mean_all(d);
    return sqrt_elem(sub(mean_sq, scale(mul(mean, mean), lambda)));
}

/// SGD with momentum, weight decay, and polynomial learning-rate decay
/// lr_t = base * (1 - t / total)^power.
class SgdOptimizer {
  public:
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double power = 0.9;

    void step(ParamStore& params, int step_index, int total_steps) {
        const double frac = total_steps > 0 ? std::min(1.0, double(step_index) / total_steps) : 0.0;
        const double lr = base_lr * std::pow(1.0 - frac, power);
        if (velocity_.empty()) velocity_.resize(params.entries().size());
        for (std::size_t p = 0; p < params.entries().size(); ++p) {
            Tensor& t = params.entries()[p].second;
            if (t.grad().empty()) continue;
            auto& vel = velocity_[p];
            if (vel.size() != t.size()) vel.assign(t.size(), 0.0);
            auto& val = t.value();
            const auto& grad = t.grad();
            for (std::size_t i = 0; i < val.size(); ++i) {
                vel[i] = momentum * vel[i] + grad[i] + weight_decay * val[i];
                val[i] -= lr * vel[i];
            }
        }
    }

  private:
    std::vector<std::vector<double>> velocity_;
};

// ---------------------------------------------------------------------------
// Checkpoint format: 8-byte magic "DSWUNET1", little-endian u64 header size,
// JSON header {version, config, lens_family, params:[{name, shape, offset}]},
// then float64 little-endian payloads in directory order.

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'W', 'U', 'N', 'E', 'T', '1'};

inline void save_checkpoint(const DarSwinUnet& model, const std::string& path) {
    nlohmann::json dir = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : model.params.entries()) {
        dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    const nlohmann::json header{{"version", 1},
                                {"config", config_to_json(model.cfg)},
                                {"lens_family", "unified"},
                                {"params", dir}};
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("model: cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : model.params.entries())
        out.write(reinterpret_cast<const char*>(t.value().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) throw std::runtime_error("model: checkpoint write failed: " + path);
}

inline DarSwinUnet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("model: cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("model: bad checkpoint magic in " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in || hlen == 0 || hlen > (1u << 26))
        throw std::runtime_error("model: corrupt checkpoint header length in " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("model: truncated checkpoint header in " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw std::runtime_error("model: corrupt checkpoint JSON in " + path);
    if (header.at("version").get<int>() != 1)
        throw std::runtime_error("model: unsupported checkpoint version " +
                                 std::to_string(header.at("version").get<int>()));

    DarSwinUnet model = DarSwinUnet::init(config_from_json(header.at("config")), 0);
    for (const auto& entry : header.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        if (!model.params.has(name))
            throw std::runtime_error("model: checkpoint parameter " + name +
                                     " does not exist in the configured model");
        Tensor t = model.params.get(name);
        if (t.shape() != shape)
            throw std::runtime_error("model: checkpoint parameter " + name + " has shape " +
                                     shape_str(shape) + ", expected " + shape_str(t.shape()));
        in.read(reinterpret_cast<char*>(t.value().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw std::runtime_error("model: truncated checkpoint payload at " + name);
    }
    return model;
}

}  // namespace darswin
