#include "visent/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "visent/errors.hpp"

namespace visent {

const char* to_string(TextMode m) {
    switch (m) {
        case TextMode::detailed: return "detailed";
        case TextMode::rough: return "rough";
        case TextMode::null_text: return "null";
    }
    return "?";
}

TextMode parse_text_mode(const std::string& name) {
    if (name == "detailed") return TextMode::detailed;
    if (name == "rough") return TextMode::rough;
    if (name == "null" || name == "null_text" || name.empty()) return TextMode::null_text;
    throw ConfigError("unknown text mode: " + name);
}

const char* to_string(HeadMode m) {
    return m == HeadMode::x_prediction ? "x_prediction" : "raw_velocity";
}

HeadMode parse_head_mode(const std::string& name) {
    if (name == "x_prediction") return HeadMode::x_prediction;
    if (name == "raw_velocity") return HeadMode::raw_velocity;
    throw ConfigError("unknown head mode: " + name);
}

void ModelConfig::validate() const {
    if (dim < 8 || dim % 8 != 0) throw ConfigError("model dim must be a positive multiple of 8");
    if (heads < 1 || dim % heads != 0) throw ConfigError("model dim must divide by heads");
    if (layers < 1) throw ConfigError("model needs at least one layer");
    if (patch < 1) throw ConfigError("patch must be positive");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be positive");
    if (prompt_len < 1) throw ConfigError("prompt_len must be positive");
    if (num_tasks < 1) throw ConfigError("num_tasks must be positive");
    if (max_t < 1 || max_h < 1 || max_w < 1) throw ConfigError("position bounds must be positive");
    if (!(t_floor > 0.0 && t_floor < 1.0)) throw ConfigError("t_floor must lie in (0,1)");
}

namespace {

constexpr double kLnEps = 1e-6;
constexpr double kTimeScale = 1000.0;
constexpr double kPosScale = 1.0;

double silu(double x) { return x / (1.0 + std::exp(-x)); }
double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }
double gelu_grad(double x) {
    const double phi_big = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
    const double phi_small = std::exp(-0.5 * x * x) * 0.3989422804014327;
    return phi_big + x * phi_small;
}

// Pair-interleaved sinusoidal features of a scalar coordinate.
void sinusoid_into(double value, double* out, int dim) {
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out[2 * i] = std::sin(value * freq);
        out[2 * i + 1] = std::cos(value * freq);
    }
}

void add_row_bias(Mat& y, const Tensor& b) {
    for (int i = 0; i < y.rows(); ++i) {
        double* r = y.row(i);
        for (int j = 0; j < y.cols(); ++j) r[j] += b.v[static_cast<size_t>(j)];
    }
}

// y = x * W + b, optionally + scale * (x * down) * up with xd cached.
void lin_fwd(const Tensor& W, const Tensor& b, const LoRAEntry* lora, double scale, const Mat& x,
             Mat& y, Mat* xd) {
    y = Mat(x.rows(), W.cols);
    matmul_acc(x.data(), W.v.data(), y.data(), x.rows(), W.rows, W.cols);
    add_row_bias(y, b);
    if (lora != nullptr) {
        const int r = lora->down.cols;
        Mat t(x.rows(), r);
        matmul_acc(x.data(), lora->down.v.data(), t.data(), x.rows(), lora->down.rows, r);
        Mat delta(x.rows(), W.cols);
        matmul_acc(t.data(), lora->up.v.data(), delta.data(), x.rows(), r, W.cols);
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] += scale * delta.data()[i];
        if (xd != nullptr) *xd = std::move(t);
    } else if (xd != nullptr) {
        *xd = Mat();
    }
}

void lin_bwd(Tensor& W, Tensor& b, LoRAEntry* lora, double scale, const Mat& x, const Mat& xd,
             const Mat& dy, Mat* dx) {
    matmul_at_acc(x.data(), dy.data(), W.g.data(), x.rows(), W.rows, W.cols);
    for (int i = 0; i < dy.rows(); ++i) {
        const double* r = dy.row(i);
        for (int j = 0; j < dy.cols(); ++j) b.g[static_cast<size_t>(j)] += r[j];
    }
    if (dx != nullptr)
        matmul_bt_acc(dy.data(), W.v.data(), dx->data(), dy.rows(), W.cols, W.rows);
    if (lora != nullptr) {
        const int r = lora->down.cols;
        // d_up += scale * xd^T dy
        Mat dup(r, W.cols);
        matmul_at_acc(xd.data(), dy.data(), dup.data(), xd.rows(), r, W.cols);
        for (size_t i = 0; i < lora->up.g.size(); ++i) lora->up.g[i] += scale * dup.data()[i];
        // d_xd = scale * dy up^T; d_down += x^T d_xd; dx += d_xd down^T
        Mat dxd(dy.rows(), r);
        matmul_bt_acc(dy.data(), lora->up.v.data(), dxd.data(), dy.rows(), W.cols, r);
        for (size_t i = 0; i < dxd.size(); ++i) dxd.data()[i] *= scale;
        matmul_at_acc(x.data(), dxd.data(), lora->down.g.data(), x.rows(), lora->down.rows, r);
        if (dx != nullptr)
            matmul_bt_acc(dxd.data(), lora->down.v.data(), dx->data(), dxd.rows(), r,
                          lora->down.rows);
    }
}

// Row-wise layernorm without affine terms; caches the normalized output and
// the reciprocal stddev per row.
void layernorm_fwd(const Mat& x, Mat& y, std::vector<double>& rstd) {
    y = Mat(x.rows(), x.cols());
    rstd.assign(static_cast<size_t>(x.rows()), 0.0);
    const int m = x.cols();
    for (int i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < m; ++j) mean += xi[j];
        mean /= m;
        double var = 0.0;
        for (int j = 0; j < m; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= m;
        const double r = 1.0 / std::sqrt(var + kLnEps);
        rstd[static_cast<size_t>(i)] = r;
        double* yi = y.row(i);
        for (int j = 0; j < m; ++j) yi[j] = (xi[j] - mean) * r;
    }
}

// dx += r * (dy - mean(dy) - y * mean(dy .* y)) per row
void layernorm_bwd_acc(const Mat& y, const std::vector<double>& rstd, const Mat& dy, Mat& dx) {
    const int m = y.cols();
    for (int i = 0; i < y.rows(); ++i) {
        const double* yi = y.row(i);
        const double* di = dy.row(i);
        double mean_d = 0.0, mean_dy = 0.0;
        for (int j = 0; j < m; ++j) {
            mean_d += di[j];
            mean_dy += di[j] * yi[j];
        }
        mean_d /= m;
        mean_dy /= m;
        const double r = rstd[static_cast<size_t>(i)];
        double* oi = dx.row(i);
        for (int j = 0; j < m; ++j) oi[j] += r * (di[j] - mean_d - yi[j] * mean_dy);
    }
}

// xm = ln .* (1 + scale) + shift, broadcast over rows.
void modulate(const Mat& ln, const double* shift, const double* scale, Mat& xm) {
    xm = Mat(ln.rows(), ln.cols());
    for (int i = 0; i < ln.rows(); ++i) {
        const double* li = ln.row(i);
        double* xi = xm.row(i);
        for (int j = 0; j < ln.cols(); ++j) xi[j] = li[j] * (1.0 + scale[j]) + shift[j];
    }
}

void modulate_bwd(const Mat& ln, const Mat& dxm, const double* scale, Mat& dln, double* d_shift,
                  double* d_scale) {
    dln = Mat(ln.rows(), ln.cols());
    for (int i = 0; i < ln.rows(); ++i) {
        const double* li = ln.row(i);
        const double* di = dxm.row(i);
        double* oi = dln.row(i);
        for (int j = 0; j < ln.cols(); ++j) {
            oi[j] = di[j] * (1.0 + scale[j]);
            d_scale[j] += di[j] * li[j];
            d_shift[j] += di[j];
        }
    }
}

void softmax_rows(Mat& s) {
    for (int i = 0; i < s.rows(); ++i) {
        double* r = s.row(i);
        double mx = r[0];
        for (int j = 1; j < s.cols(); ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < s.cols(); ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < s.cols(); ++j) r[j] *= inv;
    }
}

void head_slice(const Mat& x, int head, int dh, Mat& out) {
    out = Mat(x.rows(), dh);
    for (int i = 0; i < x.rows(); ++i)
        std::memcpy(out.row(i), x.row(i) + head * dh, sizeof(double) * static_cast<size_t>(dh));
}

void head_unslice_acc(Mat& x, int head, int dh, const Mat& part) {
    for (int i = 0; i < x.rows(); ++i) {
        double* xi = x.row(i) + head * dh;
        const double* pi = part.row(i);
        for (int j = 0; j < dh; ++j) xi[j] += pi[j];
    }
}

// Attention over per-head slices of q against (k, v); block_mask optionally
// suppresses query/key pairs whose target-mask bits differ.
void attention_fwd(const Mat& q, const Mat& k, const Mat& v, int heads, std::vector<Mat>& probs,
                   Mat& out_cat, const std::vector<uint8_t>* qmask,
                   const std::vector<uint8_t>* kmask) {
    const int dh = q.cols() / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    probs.assign(static_cast<size_t>(heads), Mat());
    out_cat = Mat(q.rows(), q.cols());
    Mat qh, kh, vh;
    for (int h = 0; h < heads; ++h) {
        head_slice(q, h, dh, qh);
        head_slice(k, h, dh, kh);
        head_slice(v, h, dh, vh);
        Mat s(q.rows(), k.rows());
        matmul_bt_acc(qh.data(), kh.data(), s.data(), q.rows(), dh, k.rows());
        for (size_t i = 0; i < s.size(); ++i) s.data()[i] *= inv_sqrt;
        if (qmask != nullptr && kmask != nullptr) {
            for (int i = 0; i < s.rows(); ++i)
                for (int j = 0; j < s.cols(); ++j)
                    if ((*qmask)[static_cast<size_t>(i)] != (*kmask)[static_cast<size_t>(j)])
                        s.at(i, j) = -1e30;
        }
        softmax_rows(s);
        Mat oh(q.rows(), dh);
        matmul_acc(s.data(), vh.data(), oh.data(), q.rows(), k.rows(), dh);
        for (int i = 0; i < q.rows(); ++i)
            std::memcpy(out_cat.row(i) + h * dh, oh.row(i), sizeof(double) * static_cast<size_t>(dh));
        probs[static_cast<size_t>(h)] = std::move(s);
    }
}

void attention_bwd(const Mat& q, const Mat& k, const Mat& v, int heads,
                   const std::vector<Mat>& probs, const Mat& d_out_cat, Mat& dq, Mat& dk, Mat& dv) {
    const int dh = q.cols() / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    dq = Mat(q.rows(), q.cols());
    dk = Mat(k.rows(), k.cols());
    dv = Mat(v.rows(), v.cols());
    Mat qh, kh, vh, doh;
    for (int h = 0; h < heads; ++h) {
        head_slice(q, h, dh, qh);
        head_slice(k, h, dh, kh);
        head_slice(v, h, dh, vh);
        head_slice(d_out_cat, h, dh, doh);
        const Mat& p = probs[static_cast<size_t>(h)];

        Mat dp(q.rows(), k.rows());
        matmul_bt_acc(doh.data(), vh.data(), dp.data(), q.rows(), dh, k.rows());
        Mat dvh(k.rows(), dh);
        matmul_at_acc(p.data(), doh.data(), dvh.data(), q.rows(), k.rows(), dh);

        // softmax backward: ds = p .* (dp - rowsum(dp .* p))
        Mat ds(q.rows(), k.rows());
        for (int i = 0; i < q.rows(); ++i) {
            const double* pi = p.row(i);
            const double* dpi = dp.row(i);
            double dot = 0.0;
            for (int j = 0; j < k.rows(); ++j) dot += pi[j] * dpi[j];
            double* dsi = ds.row(i);
            for (int j = 0; j < k.rows(); ++j) dsi[j] = pi[j] * (dpi[j] - dot) * inv_sqrt;
        }

        Mat dqh(q.rows(), dh);
        matmul_acc(ds.data(), kh.data(), dqh.data(), q.rows(), k.rows(), dh);
        Mat dkh(k.rows(), dh);
        matmul_at_acc(ds.data(), qh.data(), dkh.data(), q.rows(), k.rows(), dh);

        head_unslice_acc(dq, h, dh, dqh);
        head_unslice_acc(dk, h, dh, dkh);
        head_unslice_acc(dv, h, dh, dvh);
    }
}

// Gram-Schmidt over the rows (row count <= column count assumed).
void orthonormalize_rows(Tensor& w) {
    const int rows = w.rows, cols = w.cols;
    for (int i = 0; i < rows; ++i) {
        double* ri = w.v.data() + static_cast<size_t>(i) * cols;
        for (int k = 0; k < i; ++k) {
            const double* rk = w.v.data() + static_cast<size_t>(k) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += ri[j] * rk[j];
            for (int j = 0; j < cols; ++j) ri[j] -= dot * rk[j];
        }
        double norm = 0.0;
        for (int j = 0; j < cols; ++j) norm += ri[j] * ri[j];
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw NumericalError("degenerate input projection row");
        for (int j = 0; j < cols; ++j) ri[j] /= norm;
    }
}

constexpr std::array<const char*, 8> kProjKeys = {"sa.q", "sa.k", "sa.v", "sa.o",
                                                  "ca.q", "ca.k", "ca.v", "ca.o"};

}  // namespace

const std::vector<std::string>& LoRAConfig::all_targets() {
    static const std::vector<std::string> all(kProjKeys.begin(), kProjKeys.end());
    return all;
}

DiTModel::DiTModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    init_parameters();
    build_registry();
}

DiTModel::~DiTModel() = default;

void DiTModel::init_parameters() {
    const int M = cfg_.dim;
    const int D = cfg_.token_dim();
    const int F = cfg_.mlp_dim();

    in_w_ = Tensor("in_proj.w", D, M);
    in_b_ = Tensor("in_proj.b", M, 1);
    t_w1_ = Tensor("t_mlp.w1", M, M);
    t_b1_ = Tensor("t_mlp.b1", M, 1);
    t_w2_ = Tensor("t_mlp.w2", M, M);
    t_b2_ = Tensor("t_mlp.b2", M, 1);
    final_mod_w_ = Tensor("final_mod.w", M, 2 * M);
    final_mod_b_ = Tensor("final_mod.b", 2 * M, 1);
    out_w_ = Tensor("out_proj.w", M, D);
    out_b_ = Tensor("out_proj.b", D, 1);
    prompt_detailed_ = Tensor("prompt.detailed", cfg_.num_tasks * cfg_.prompt_len, M);
    prompt_rough_ = Tensor("prompt.rough", cfg_.prompt_len, M);

    blocks_.clear();
    blocks_.resize(static_cast<size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
        auto& blk = blocks_[static_cast<size_t>(l)];
        const std::string p = "blocks." + std::to_string(l) + ".";
        blk.mod_w = Tensor(p + "mod.w", M, 9 * M);
        blk.mod_b = Tensor(p + "mod.b", 9 * M, 1);
        auto make_attn = [&](AttnParams& a, const std::string& tag) {
            a.wq = Tensor(p + tag + ".q.w", M, M);
            a.bq = Tensor(p + tag + ".q.b", M, 1);
            a.wk = Tensor(p + tag + ".k.w", M, M);
            a.bk = Tensor(p + tag + ".k.b", M, 1);
            a.wv = Tensor(p + tag + ".v.w", M, M);
            a.bv = Tensor(p + tag + ".v.b", M, 1);
            a.wo = Tensor(p + tag + ".o.w", M, M);
            a.bo = Tensor(p + tag + ".o.b", M, 1);
        };
        make_attn(blk.sa, "sa");
        make_attn(blk.ca, "ca");
        blk.mlp_w1 = Tensor(p + "mlp.w1", M, F);
        blk.mlp_b1 = Tensor(p + "mlp.b1", F, 1);
        blk.mlp_w2 = Tensor(p + "mlp.w2", F, M);
        blk.mlp_b2 = Tensor(p + "mlp.b2", M, 1);
    }

    RngStream rng(derive_seed(cfg_.seed, 0x1417u));
    const double inv_sd = 1.0 / std::sqrt(static_cast<double>(D));
    const double inv_sm = 1.0 / std::sqrt(static_cast<double>(M));
    const double inv_sf = 1.0 / std::sqrt(static_cast<double>(F));

    in_w_.init_normal(rng, inv_sd);
    t_w1_.init_normal(rng, inv_sm);
    t_w2_.init_normal(rng, inv_sm);
    for (auto& blk : blocks_) {
        blk.mod_w.init_normal(rng, 0.02);
        // small gate biases keep the base near the token pass-through; the
        // adapters scale their own contributions up during training. chunk
        // order: [sh_sa, sc_sa, g_sa, sh_ca, sc_ca, g_ca, sh_mlp, sc_mlp, g_mlp]
        const int M2 = cfg_.dim;
        for (int c = 0; c < 9; ++c)
            if (c % 3 == 2)
                for (int j = 0; j < M2; ++j) blk.mod_b.v[static_cast<size_t>(c * M2 + j)] = 0.4;
        // frozen branch outputs start small so the base stays close to the
        // token pass-through; adapter deltas on the projections are free to
        // grow, so trainable capacity is unaffected
        for (Tensor* w : {&blk.sa.wq, &blk.sa.wk, &blk.sa.wv, &blk.ca.wq, &blk.ca.wk, &blk.ca.wv})
            w->init_normal(rng, inv_sm);
        blk.sa.wo.init_normal(rng, 0.1 * inv_sm);
        blk.ca.wo.init_normal(rng, 0.1 * inv_sm);
        blk.mlp_w1.init_normal(rng, inv_sm);
        blk.mlp_w2.init_normal(rng, 0.15 * inv_sf);
    }
    final_mod_w_.init_normal(rng, 0.002);
    prompt_detailed_.init_normal(rng, 1.0);
    prompt_rough_.init_normal(rng, 1.0);

    if (cfg_.dim >= cfg_.token_dim()) {
        // Orthonormalize the input projection rows and tie the output head to
        // its transpose: the frozen token round trip W_in * W_out = I is then
        // exact, so pixel content survives the base network unscathed.
        orthonormalize_rows(in_w_);
        for (int i = 0; i < out_w_.rows; ++i)
            for (int j = 0; j < out_w_.cols; ++j)
                out_w_.v[static_cast<size_t>(i) * out_w_.cols + j] =
                    in_w_.v[static_cast<size_t>(j) * in_w_.cols + i];
    } else {
        out_w_.init_normal(rng, inv_sm);
    }
}

void DiTModel::build_registry() {
    base_registry_.clear();
    base_registry_.push_back(&in_w_);
    base_registry_.push_back(&in_b_);
    base_registry_.push_back(&t_w1_);
    base_registry_.push_back(&t_b1_);
    base_registry_.push_back(&t_w2_);
    base_registry_.push_back(&t_b2_);
    for (auto& blk : blocks_) {
        base_registry_.push_back(&blk.mod_w);
        base_registry_.push_back(&blk.mod_b);
        for (AttnParams* a : {&blk.sa, &blk.ca}) {
            base_registry_.push_back(&a->wq);
            base_registry_.push_back(&a->bq);
            base_registry_.push_back(&a->wk);
            base_registry_.push_back(&a->bk);
            base_registry_.push_back(&a->wv);
            base_registry_.push_back(&a->bv);
            base_registry_.push_back(&a->wo);
            base_registry_.push_back(&a->bo);
        }
        base_registry_.push_back(&blk.mlp_w1);
        base_registry_.push_back(&blk.mlp_b1);
        base_registry_.push_back(&blk.mlp_w2);
        base_registry_.push_back(&blk.mlp_b2);
    }
    base_registry_.push_back(&final_mod_w_);
    base_registry_.push_back(&final_mod_b_);
    base_registry_.push_back(&out_w_);
    base_registry_.push_back(&out_b_);
    base_registry_.push_back(&prompt_detailed_);
    base_registry_.push_back(&prompt_rough_);
}

PromptEmbedding DiTModel::prompt_embedding(TaskKind task) const {
    PromptEmbedding p;
    p.mode = cfg_.text_mode;
    p.task_index = static_cast<int>(task);
    if (p.mode == TextMode::null_text) return p;
    if (p.mode == TextMode::detailed && p.task_index >= cfg_.num_tasks)
        throw ConfigError("prompt table has no row for task index " +
                          std::to_string(p.task_index));
    p.vectors = Mat(cfg_.prompt_len, cfg_.dim);
    const Tensor& table = p.mode == TextMode::detailed ? prompt_detailed_ : prompt_rough_;
    const int base = p.mode == TextMode::detailed ? p.task_index * cfg_.prompt_len : 0;
    for (int i = 0; i < cfg_.prompt_len; ++i)
        std::memcpy(p.vectors.row(i), table.v.data() + static_cast<size_t>(base + i) * cfg_.dim,
                    sizeof(double) * static_cast<size_t>(cfg_.dim));
    return p;
}

Mat DiTModel::positional_encoding(const std::vector<TokenGrid::Coord>& coords) const {
    const int M = cfg_.dim;
    const int ct = M / 2, ch = M / 4, cw = M / 4;
    Mat pos(static_cast<int>(coords.size()), M);
    for (size_t i = 0; i < coords.size(); ++i) {
        const auto& c = coords[i];
        if (c.t < 0 || c.t >= cfg_.max_t || c.h < 0 || c.h >= cfg_.max_h || c.w < 0 ||
            c.w >= cfg_.max_w)
            throw ConfigError("token position (" + std::to_string(c.t) + "," + std::to_string(c.h) +
                              "," + std::to_string(c.w) + ") outside model bounds");
        double* r = pos.row(static_cast<int>(i));
        sinusoid_into(static_cast<double>(c.t), r, ct);
        sinusoid_into(static_cast<double>(c.h), r + ct, ch);
        sinusoid_into(static_cast<double>(c.w), r + ct + ch, cw);
    }
    return pos;
}

Mat DiTModel::forward(const TokenGrid& grid, double t, const PromptEmbedding& prompt,
                      Workspace* ws_in, const ForwardOptions& opts) const {
    if (grid.token_dim != cfg_.token_dim())
        throw ConfigError("grid token dim " + std::to_string(grid.token_dim) +
                          " does not match model input " + std::to_string(cfg_.token_dim()));
    Workspace local;
    Workspace& ws = ws_in != nullptr ? *ws_in : local;
    const int n = grid.rows;
    const int M = cfg_.dim;

    ws.opts = opts;
    ws.t = t;
    ws.n = n;
    ws.mask = grid.target_mask;
    ws.prompt_mode = prompt.mode;
    ws.prompt_task = prompt.task_index;

    ws.x0 = Mat(n, cfg_.token_dim());
    std::memcpy(ws.x0.data(), grid.tokens.data(), sizeof(double) * grid.tokens.size());
    ws.pos = positional_encoding(grid.coords);

    // token embedding; when the width allows, position features live in the
    // orthogonal complement of the content row space so they neither bleed
    // into the output head nor pick up token noise
    lin_fwd(in_w_, in_b_, nullptr, 0.0, ws.x0, ws.h0, nullptr);
    if (cfg_.dim > cfg_.token_dim()) {
        const int D = cfg_.token_dim();
        Mat coeff(n, D);
        matmul_bt_acc(ws.pos.data(), in_w_.v.data(), coeff.data(), n, M, D);
        Mat content(n, M);
        matmul_acc(coeff.data(), in_w_.v.data(), content.data(), n, D, M);
        for (size_t i = 0; i < ws.pos.size(); ++i) ws.pos.data()[i] -= content.data()[i];
    }
    for (size_t i = 0; i < ws.h0.size(); ++i) ws.h0.data()[i] += kPosScale * ws.pos.data()[i];

    // timestep features
    ws.temb.assign(static_cast<size_t>(M), 0.0);
    sinusoid_into(t * kTimeScale, ws.temb.data(), M);
    ws.t_h1.assign(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < M; ++j) {
        double acc = t_b1_.v[static_cast<size_t>(j)];
        for (int i = 0; i < M; ++i) acc += ws.temb[static_cast<size_t>(i)] * t_w1_.v[static_cast<size_t>(i) * M + j];
        ws.t_h1[static_cast<size_t>(j)] = acc;
    }
    ws.t_a1.assign(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < M; ++j) ws.t_a1[static_cast<size_t>(j)] = silu(ws.t_h1[static_cast<size_t>(j)]);
    ws.tfeat.assign(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < M; ++j) {
        double acc = t_b2_.v[static_cast<size_t>(j)];
        for (int i = 0; i < M; ++i) acc += ws.t_a1[static_cast<size_t>(i)] * t_w2_.v[static_cast<size_t>(i) * M + j];
        ws.tfeat[static_cast<size_t>(j)] = acc;
    }

    // prompt rows materialized from the current tables
    if (ws.prompt_mode == TextMode::null_text) {
        ws.prompt = Mat();
    } else {
        const Tensor& table = ws.prompt_mode == TextMode::detailed ? prompt_detailed_ : prompt_rough_;
        const int base = ws.prompt_mode == TextMode::detailed ? ws.prompt_task * cfg_.prompt_len : 0;
        if (ws.prompt_mode == TextMode::detailed &&
            (ws.prompt_task < 0 || ws.prompt_task >= cfg_.num_tasks))
            throw ConfigError("prompt task index out of range");
        ws.prompt = Mat(cfg_.prompt_len, M);
        for (int i = 0; i < cfg_.prompt_len; ++i)
            std::memcpy(ws.prompt.row(i), table.v.data() + static_cast<size_t>(base + i) * M,
                        sizeof(double) * static_cast<size_t>(M));
    }

    ws.layers.assign(static_cast<size_t>(cfg_.layers), LayerCache{});
    Mat h = ws.h0;
    const double ls = lora_ != nullptr ? lora_->config.scale() : 0.0;

    for (int l = 0; l < cfg_.layers; ++l) {
        const Block& blk = blocks_[static_cast<size_t>(l)];
        LayerCache& lc = ws.layers[static_cast<size_t>(l)];
        const auto& lidx = lora_index_.empty() ? std::array<LoRAEntry*, 8>{} : lora_index_[static_cast<size_t>(l)];

        lc.mod.assign(static_cast<size_t>(9 * M), 0.0);
        for (int j = 0; j < 9 * M; ++j) {
            double acc = blk.mod_b.v[static_cast<size_t>(j)];
            for (int i = 0; i < M; ++i)
                acc += ws.tfeat[static_cast<size_t>(i)] * blk.mod_w.v[static_cast<size_t>(i) * (9 * M) + j];
            lc.mod[static_cast<size_t>(j)] = acc;
        }
        const double* sh_sa = lc.mod.data();
        const double* sc_sa = lc.mod.data() + M;
        const double* g_sa = lc.mod.data() + 2 * M;
        const double* sh_ca = lc.mod.data() + 3 * M;
        const double* sc_ca = lc.mod.data() + 4 * M;
        const double* g_ca = lc.mod.data() + 5 * M;
        const double* sh_mlp = lc.mod.data() + 6 * M;
        const double* sc_mlp = lc.mod.data() + 7 * M;
        const double* g_mlp = lc.mod.data() + 8 * M;

        // self-attention
        lc.h_in = h;
        layernorm_fwd(lc.h_in, lc.ln1, lc.rstd1);
        modulate(lc.ln1, sh_sa, sc_sa, lc.xm1);
        lin_fwd(blk.sa.wq, blk.sa.bq, lidx[0], ls, lc.xm1, lc.q, &lc.sa_q_xd);
        lin_fwd(blk.sa.wk, blk.sa.bk, lidx[1], ls, lc.xm1, lc.k, &lc.sa_k_xd);
        lin_fwd(blk.sa.wv, blk.sa.bv, lidx[2], ls, lc.xm1, lc.v, &lc.sa_v_xd);
        const std::vector<uint8_t>* bm = opts.block_context_target_attention ? &ws.mask : nullptr;
        attention_fwd(lc.q, lc.k, lc.v, cfg_.heads, lc.attn, lc.attn_cat, bm, bm);
        lin_fwd(blk.sa.wo, blk.sa.bo, lidx[3], ls, lc.attn_cat, lc.sa_out, &lc.sa_o_xd);
        for (int i = 0; i < n; ++i) {
            double* hi = h.row(i);
            const double* oi = lc.sa_out.row(i);
            for (int j = 0; j < M; ++j) hi[j] += g_sa[j] * oi[j];
        }

        // cross-attention to the prompt
        lc.h_mid = h;
        if (ws.prompt.rows() > 0) {
            layernorm_fwd(lc.h_mid, lc.ln2, lc.rstd2);
            modulate(lc.ln2, sh_ca, sc_ca, lc.xm2);
            lin_fwd(blk.ca.wq, blk.ca.bq, lidx[4], ls, lc.xm2, lc.ca_q, &lc.ca_q_xd);
            lin_fwd(blk.ca.wk, blk.ca.bk, lidx[5], ls, ws.prompt, lc.ca_k, &lc.ca_k_xd);
            lin_fwd(blk.ca.wv, blk.ca.bv, lidx[6], ls, ws.prompt, lc.ca_v, &lc.ca_v_xd);
            attention_fwd(lc.ca_q, lc.ca_k, lc.ca_v, cfg_.heads, lc.ca_attn, lc.ca_cat, nullptr,
                          nullptr);
            lin_fwd(blk.ca.wo, blk.ca.bo, lidx[7], ls, lc.ca_cat, lc.ca_out, &lc.ca_o_xd);
            for (int i = 0; i < n; ++i) {
                double* hi = h.row(i);
                const double* oi = lc.ca_out.row(i);
                for (int j = 0; j < M; ++j) hi[j] += g_ca[j] * oi[j];
            }
        }

        // mlp
        lc.h_pre_mlp = h;
        layernorm_fwd(lc.h_pre_mlp, lc.ln3, lc.rstd3);
        modulate(lc.ln3, sh_mlp, sc_mlp, lc.xm3);
        lin_fwd(blk.mlp_w1, blk.mlp_b1, nullptr, 0.0, lc.xm3, lc.mlp_pre, nullptr);
        lc.mlp_act = Mat(n, cfg_.mlp_dim());
        for (size_t i = 0; i < lc.mlp_pre.size(); ++i)
            lc.mlp_act.data()[i] = gelu(lc.mlp_pre.data()[i]);
        lin_fwd(blk.mlp_w2, blk.mlp_b2, nullptr, 0.0, lc.mlp_act, lc.mlp_out, nullptr);
        for (int i = 0; i < n; ++i) {
            double* hi = h.row(i);
            const double* oi = lc.mlp_out.row(i);
            for (int j = 0; j < M; ++j) hi[j] += g_mlp[j] * oi[j];
        }
    }

    ws.h_final = h;
    // the head path is intentionally unnormalized: the residual trunk holds
    // the token content at exact scale (orthonormal round trip), which the
    // clean-target head needs
    ws.fmod.assign(static_cast<size_t>(2 * M), 0.0);
    for (int j = 0; j < 2 * M; ++j) {
        double acc = final_mod_b_.v[static_cast<size_t>(j)];
        for (int i = 0; i < M; ++i)
            acc += ws.tfeat[static_cast<size_t>(i)] * final_mod_w_.v[static_cast<size_t>(i) * (2 * M) + j];
        ws.fmod[static_cast<size_t>(j)] = acc;
    }
    modulate(ws.h_final, ws.fmod.data(), ws.fmod.data() + M, ws.xf);
    lin_fwd(out_w_, out_b_, nullptr, 0.0, ws.xf, ws.head_out, nullptr);
    if (cfg_.head == HeadMode::x_prediction) {
        const double tt = std::max(t, cfg_.t_floor);
        ws.out = Mat(n, cfg_.token_dim());
        for (int i = 0; i < n; ++i) {
            const double* z = ws.x0.row(i);
            const double* xh = ws.head_out.row(i);
            double* o = ws.out.row(i);
            for (int j = 0; j < cfg_.token_dim(); ++j) o[j] = (z[j] - xh[j]) / tt;
        }
    } else {
        ws.out = ws.head_out;
    }
    return ws.out;
}

void DiTModel::backward(Workspace& ws, const Mat& d_out) {
    const int n = ws.n;
    const int M = cfg_.dim;
    if (d_out.rows() != n || d_out.cols() != cfg_.token_dim())
        throw InvariantError("backward: output gradient shape mismatch");
    const double ls = lora_ != nullptr ? lora_->config.scale() : 0.0;

    std::vector<double> d_tfeat(static_cast<size_t>(M), 0.0);

    // velocity head: under x-prediction, v = (z - x_hat)/tt with z constant
    Mat d_head;
    if (cfg_.head == HeadMode::x_prediction) {
        const double tt = std::max(ws.t, cfg_.t_floor);
        d_head = Mat(n, cfg_.token_dim());
        for (size_t i = 0; i < d_head.size(); ++i) d_head.data()[i] = -d_out.data()[i] / tt;
    } else {
        d_head = d_out;
    }

    // output projection
    Mat d_xf(n, M);
    lin_bwd(out_w_, out_b_, nullptr, 0.0, ws.xf, Mat(), d_head, &d_xf);

    // final modulation (no trailing normalization on the head path)
    std::vector<double> d_fmod(static_cast<size_t>(2 * M), 0.0);
    Mat d_hfinal;
    modulate_bwd(ws.h_final, d_xf, ws.fmod.data() + M, d_hfinal, d_fmod.data(),
                 d_fmod.data() + M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < 2 * M; ++j) {
            final_mod_w_.g[static_cast<size_t>(i) * (2 * M) + j] +=
                ws.tfeat[static_cast<size_t>(i)] * d_fmod[static_cast<size_t>(j)];
        }
    for (int j = 0; j < 2 * M; ++j) final_mod_b_.g[static_cast<size_t>(j)] += d_fmod[static_cast<size_t>(j)];
    for (int i = 0; i < M; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 2 * M; ++j)
            acc += d_fmod[static_cast<size_t>(j)] * final_mod_w_.v[static_cast<size_t>(i) * (2 * M) + j];
        d_tfeat[static_cast<size_t>(i)] += acc;
    }

    Mat dh = std::move(d_hfinal);

    Mat d_prompt;
    if (ws.prompt.rows() > 0) d_prompt = Mat(ws.prompt.rows(), M);

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        Block& blk = blocks_[static_cast<size_t>(l)];
        LayerCache& lc = ws.layers[static_cast<size_t>(l)];
        auto lidx = lora_index_.empty() ? std::array<LoRAEntry*, 8>{} : lora_index_[static_cast<size_t>(l)];

        std::vector<double> d_mod(static_cast<size_t>(9 * M), 0.0);
        const double* g_sa = lc.mod.data() + 2 * M;
        const double* sc_sa = lc.mod.data() + M;
        const double* g_ca = lc.mod.data() + 5 * M;
        const double* sc_ca = lc.mod.data() + 4 * M;
        const double* g_mlp = lc.mod.data() + 8 * M;
        const double* sc_mlp = lc.mod.data() + 7 * M;

        // ----- mlp -----
        {
            Mat d_mlp_out(n, M);
            for (int i = 0; i < n; ++i) {
                const double* di = dh.row(i);
                const double* oi = lc.mlp_out.row(i);
                double* mo = d_mlp_out.row(i);
                for (int j = 0; j < M; ++j) {
                    mo[j] = di[j] * g_mlp[j];
                    d_mod[static_cast<size_t>(8 * M + j)] += di[j] * oi[j];
                }
            }
            Mat d_act(n, cfg_.mlp_dim());
            lin_bwd(blk.mlp_w2, blk.mlp_b2, nullptr, 0.0, lc.mlp_act, Mat(), d_mlp_out, &d_act);
            Mat d_pre(n, cfg_.mlp_dim());
            for (size_t i = 0; i < d_pre.size(); ++i)
                d_pre.data()[i] = d_act.data()[i] * gelu_grad(lc.mlp_pre.data()[i]);
            Mat d_xm3(n, M);
            lin_bwd(blk.mlp_w1, blk.mlp_b1, nullptr, 0.0, lc.xm3, Mat(), d_pre, &d_xm3);
            Mat d_ln3;
            modulate_bwd(lc.ln3, d_xm3, sc_mlp, d_ln3, d_mod.data() + 6 * M, d_mod.data() + 7 * M);
            layernorm_bwd_acc(lc.ln3, lc.rstd3, d_ln3, dh);
        }

        // ----- cross-attention -----
        if (ws.prompt.rows() > 0) {
            Mat d_ca_out(n, M);
            for (int i = 0; i < n; ++i) {
                const double* di = dh.row(i);
                const double* oi = lc.ca_out.row(i);
                double* o = d_ca_out.row(i);
                for (int j = 0; j < M; ++j) {
                    o[j] = di[j] * g_ca[j];
                    d_mod[static_cast<size_t>(5 * M + j)] += di[j] * oi[j];
                }
            }
            Mat d_cat(n, M);
            lin_bwd(blk.ca.wo, blk.ca.bo, lidx[7], ls, lc.ca_cat, lc.ca_o_xd, d_ca_out, &d_cat);
            Mat dq, dk, dv;
            attention_bwd(lc.ca_q, lc.ca_k, lc.ca_v, cfg_.heads, lc.ca_attn, d_cat, dq, dk, dv);
            Mat d_xm2(n, M);
            lin_bwd(blk.ca.wq, blk.ca.bq, lidx[4], ls, lc.xm2, lc.ca_q_xd, dq, &d_xm2);
            lin_bwd(blk.ca.wk, blk.ca.bk, lidx[5], ls, ws.prompt, lc.ca_k_xd, dk, &d_prompt);
            lin_bwd(blk.ca.wv, blk.ca.bv, lidx[6], ls, ws.prompt, lc.ca_v_xd, dv, &d_prompt);
            Mat d_ln2;
            modulate_bwd(lc.ln2, d_xm2, sc_ca, d_ln2, d_mod.data() + 3 * M, d_mod.data() + 4 * M);
            layernorm_bwd_acc(lc.ln2, lc.rstd2, d_ln2, dh);
        }

        // ----- self-attention -----
        {
            Mat d_sa_out(n, M);
            for (int i = 0; i < n; ++i) {
                const double* di = dh.row(i);
                const double* oi = lc.sa_out.row(i);
                double* o = d_sa_out.row(i);
                for (int j = 0; j < M; ++j) {
                    o[j] = di[j] * g_sa[j];
                    d_mod[static_cast<size_t>(2 * M + j)] += di[j] * oi[j];
                }
            }
            Mat d_cat(n, M);
            lin_bwd(blk.sa.wo, blk.sa.bo, lidx[3], ls, lc.attn_cat, lc.sa_o_xd, d_sa_out, &d_cat);
            Mat dq, dk, dv;
            attention_bwd(lc.q, lc.k, lc.v, cfg_.heads, lc.attn, d_cat, dq, dk, dv);
            Mat d_xm1(n, M);
            lin_bwd(blk.sa.wq, blk.sa.bq, lidx[0], ls, lc.xm1, lc.sa_q_xd, dq, &d_xm1);
            lin_bwd(blk.sa.wk, blk.sa.bk, lidx[1], ls, lc.xm1, lc.sa_k_xd, dk, &d_xm1);
            lin_bwd(blk.sa.wv, blk.sa.bv, lidx[2], ls, lc.xm1, lc.sa_v_xd, dv, &d_xm1);
            Mat d_ln1;
            modulate_bwd(lc.ln1, d_xm1, sc_sa, d_ln1, d_mod.data() + 0, d_mod.data() + M);
            layernorm_bwd_acc(lc.ln1, lc.rstd1, d_ln1, dh);
        }

        // modulation linear
        for (int i = 0; i < M; ++i) {
            const double tf = ws.tfeat[static_cast<size_t>(i)];
            double* wg = blk.mod_w.g.data() + static_cast<size_t>(i) * (9 * M);
            for (int j = 0; j < 9 * M; ++j) wg[j] += tf * d_mod[static_cast<size_t>(j)];
        }
        for (int j = 0; j < 9 * M; ++j) blk.mod_b.g[static_cast<size_t>(j)] += d_mod[static_cast<size_t>(j)];
        for (int i = 0; i < M; ++i) {
            double acc = 0.0;
            const double* wr = blk.mod_w.v.data() + static_cast<size_t>(i) * (9 * M);
            for (int j = 0; j < 9 * M; ++j) acc += d_mod[static_cast<size_t>(j)] * wr[j];
            d_tfeat[static_cast<size_t>(i)] += acc;
        }
    }

    // prompt table
    if (ws.prompt.rows() > 0) {
        Tensor& table = ws.prompt_mode == TextMode::detailed ? prompt_detailed_ : prompt_rough_;
        const int base = ws.prompt_mode == TextMode::detailed ? ws.prompt_task * cfg_.prompt_len : 0;
        for (int i = 0; i < ws.prompt.rows(); ++i) {
            double* tg = table.g.data() + static_cast<size_t>(base + i) * M;
            const double* dp = d_prompt.row(i);
            for (int j = 0; j < M; ++j) tg[j] += dp[j];
        }
    }

    // timestep mlp
    std::vector<double> d_a1(static_cast<size_t>(M), 0.0);
    for (int i = 0; i < M; ++i) {
        const double a = ws.t_a1[static_cast<size_t>(i)];
        double* wg = t_w2_.g.data() + static_cast<size_t>(i) * M;
        double acc = 0.0;
        const double* wr = t_w2_.v.data() + static_cast<size_t>(i) * M;
        for (int j = 0; j < M; ++j) {
            wg[j] += a * d_tfeat[static_cast<size_t>(j)];
            acc += d_tfeat[static_cast<size_t>(j)] * wr[j];
        }
        d_a1[static_cast<size_t>(i)] = acc;
    }
    for (int j = 0; j < M; ++j) t_b2_.g[static_cast<size_t>(j)] += d_tfeat[static_cast<size_t>(j)];
    std::vector<double> d_h1(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < M; ++j)
        d_h1[static_cast<size_t>(j)] = d_a1[static_cast<size_t>(j)] * silu_grad(ws.t_h1[static_cast<size_t>(j)]);
    for (int i = 0; i < M; ++i) {
        const double e = ws.temb[static_cast<size_t>(i)];
        double* wg = t_w1_.g.data() + static_cast<size_t>(i) * M;
        for (int j = 0; j < M; ++j) wg[j] += e * d_h1[static_cast<size_t>(j)];
    }
    for (int j = 0; j < M; ++j) t_b1_.g[static_cast<size_t>(j)] += d_h1[static_cast<size_t>(j)];

    // input embedding (position encoding is constant)
    lin_bwd(in_w_, in_b_, nullptr, 0.0, ws.x0, Mat(), dh, nullptr);
}

void DiTModel::zero_grad() {
    for (Tensor* t : base_registry_) t->zero_grad();
    if (lora_ != nullptr)
        for (auto& e : lora_->entries) {
            e.down.zero_grad();
            e.up.zero_grad();
        }
}

void DiTModel::inject_lora(const LoRAConfig& cfg) {
    if (lora_ != nullptr) throw InvariantError("lora already injected");
    if (cfg.rank < 1) throw ConfigError("lora rank must be >= 1");
    std::vector<std::string> targets = cfg.targets.empty() ? LoRAConfig::all_targets() : cfg.targets;
    for (const auto& t : targets) {
        bool known = false;
        for (const char* k : kProjKeys) known = known || t == k;
        if (!known) throw ConfigError("unknown lora target: " + t);
    }
    if (targets.empty()) throw ConfigError("lora target set is empty");

    auto state = std::make_unique<LoRAState>();
    state->config = cfg;
    state->config.targets = targets;
    state->entries.reserve(targets.size() * static_cast<size_t>(cfg_.layers));

    RngStream rng(derive_seed(cfg_.seed, 0x10aaull));
    const int M = cfg_.dim;
    for (int l = 0; l < cfg_.layers; ++l) {
        for (const auto& t : targets) {
            LoRAEntry e;
            e.target = t;
            e.layer = l;
            const std::string stem = "blocks." + std::to_string(l) + "." + t;
            e.down = Tensor(stem + ".lora_down", M, cfg.rank);
            e.up = Tensor(stem + ".lora_up", cfg.rank, M);
            e.down.init_normal(rng, 1.0 / std::sqrt(static_cast<double>(M)));
            // up stays zero: injection leaves the forward pass bit-identical
            state->entries.push_back(std::move(e));
        }
    }

    lora_ = std::move(state);
    lora_merged_ = false;
    lora_index_.assign(static_cast<size_t>(cfg_.layers), std::array<LoRAEntry*, 8>{});
    for (auto& e : lora_->entries) {
        for (size_t k = 0; k < kProjKeys.size(); ++k)
            if (e.target == kProjKeys[k]) lora_index_[static_cast<size_t>(e.layer)][k] = &e;
    }
}

LoRAState& DiTModel::lora_state() {
    if (lora_ == nullptr) throw InvariantError("no lora injected");
    return *lora_;
}

const LoRAState& DiTModel::lora_state() const {
    if (lora_ == nullptr) throw InvariantError("no lora injected");
    return *lora_;
}

void DiTModel::merge_lora() {
    if (lora_merged_) throw InvariantError("lora already merged");
    if (lora_ == nullptr) throw InvariantError("no lora to merge");
    const double s = lora_->config.scale();
    for (auto& e : lora_->entries) {
        Block& blk = blocks_[static_cast<size_t>(e.layer)];
        Tensor* w = nullptr;
        if (e.target == "sa.q") w = &blk.sa.wq;
        else if (e.target == "sa.k") w = &blk.sa.wk;
        else if (e.target == "sa.v") w = &blk.sa.wv;
        else if (e.target == "sa.o") w = &blk.sa.wo;
        else if (e.target == "ca.q") w = &blk.ca.wq;
        else if (e.target == "ca.k") w = &blk.ca.wk;
        else if (e.target == "ca.v") w = &blk.ca.wv;
        else if (e.target == "ca.o") w = &blk.ca.wo;
        if (w == nullptr) throw InvariantError("merge: unknown target " + e.target);
        Mat delta(e.down.rows, e.up.cols);
        matmul_acc(e.down.v.data(), e.up.v.data(), delta.data(), e.down.rows, e.down.cols,
                   e.up.cols);
        for (size_t i = 0; i < w->v.size(); ++i) w->v[i] += s * delta.data()[i];
    }
    lora_.reset();
    lora_index_.clear();
    lora_merged_ = true;
}

std::vector<Tensor*> DiTModel::base_parameters() { return base_registry_; }

std::vector<const Tensor*> DiTModel::base_parameters() const {
    return {base_registry_.begin(), base_registry_.end()};
}

std::vector<Tensor*> DiTModel::trainable_parameters() {
    std::vector<Tensor*> out;
    if (lora_ == nullptr) return out;
    for (auto& e : lora_->entries) {
        out.push_back(&e.down);
        out.push_back(&e.up);
    }
    return out;
}

std::vector<Tensor*> DiTModel::all_parameters() {
    std::vector<Tensor*> out = base_registry_;
    for (Tensor* t : trainable_parameters()) out.push_back(t);
    return out;
}

Tensor* DiTModel::find_parameter(const std::string& name) {
    for (Tensor* t : base_registry_)
        if (t->name == name) return t;
    if (lora_ != nullptr)
        for (auto& e : lora_->entries) {
            if (e.down.name == name) return &e.down;
            if (e.up.name == name) return &e.up;
        }
    return nullptr;
}

}  // namespace visent
