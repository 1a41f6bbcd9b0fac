#include "visent/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "visent/errors.hpp"

namespace visent {

NoisySentence noising(const TokenGrid& clean, double t, uint64_t seed) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("noising: t must lie in [0,1]");
    NoisySentence out;
    out.grid = clean;
    out.t = t;
    out.epsilon.assign(clean.tokens.size(), 0.0);

    RngStream rng(seed);
    const int d = clean.token_dim;
    for (int r = 0; r < clean.rows; ++r) {
        if (clean.target_mask[static_cast<size_t>(r)] == 0) continue;  // context rows untouched
        double* z = out.grid.row(r);
        double* e = out.epsilon.data() + static_cast<size_t>(r) * d;
        const double* x = clean.row(r);
        for (int j = 0; j < d; ++j) {
            e[j] = rng.normal();
            z[j] = (1.0 - t) * x[j] + t * e[j];
        }
    }
    return out;
}

double velocity_loss(const Mat& model_out, const std::vector<double>& epsilon,
                     const std::vector<double>& clean_tokens,
                     const std::vector<uint8_t>& target_mask, Mat* d_out) {
    const int n = model_out.rows();
    const int d = model_out.cols();
    if (epsilon.size() != static_cast<size_t>(n) * d || clean_tokens.size() != epsilon.size() ||
        target_mask.size() != static_cast<size_t>(n))
        throw InvariantError("velocity_loss: shape mismatch");

    int target_rows = 0;
    for (uint8_t m : target_mask) target_rows += m != 0 ? 1 : 0;
    if (target_rows == 0) throw InvariantError("velocity_loss: no target rows");
    const double denom = static_cast<double>(target_rows) * d;

    if (d_out != nullptr) *d_out = Mat(n, d);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (target_mask[static_cast<size_t>(i)] == 0) continue;
        const double* o = model_out.row(i);
        const double* e = epsilon.data() + static_cast<size_t>(i) * d;
        const double* x = clean_tokens.data() + static_cast<size_t>(i) * d;
        double* g = d_out != nullptr ? d_out->row(i) : nullptr;
        for (int j = 0; j < d; ++j) {
            const double diff = o[j] - (e[j] - x[j]);
            acc += diff * diff;
            if (g != nullptr) g[j] = 2.0 * diff / denom;
        }
    }
    return acc / denom;
}

ContextType sample_context(TaskKind task, RngStream& rng) {
    const double u = rng.uniform();
    if (is_camera_task(task)) return u < 0.5 ? ContextType::I : ContextType::IV;
    if (u < 0.3) return ContextType::I;
    if (u < 0.6) return ContextType::II;
    return ContextType::III;
}

const char* to_string(Regime r) {
    switch (r) {
        case Regime::per_task_per_context: return "per-task-per-context";
        case Regime::per_task_mixed: return "per-task-mixed";
        case Regime::co_train_all: return "co-train-all";
    }
    return "?";
}

Regime parse_regime(const std::string& name) {
    if (name == "per-task-per-context") return Regime::per_task_per_context;
    if (name == "per-task-mixed") return Regime::per_task_mixed;
    if (name == "co-train-all") return Regime::co_train_all;
    throw ConfigError("unknown regime: " + name);
}

const TaskDataset* TrainingData::find(TaskKind kind, ContextType context) const {
    for (const auto& s : sets)
        if (s.kind == kind && s.context == context) return &s;
    return nullptr;
}

std::vector<TaskKind> TrainingData::distinct_tasks() const {
    std::vector<TaskKind> out;
    for (const auto& s : sets)
        if (std::find(out.begin(), out.end(), s.kind) == out.end()) out.push_back(s.kind);
    return out;
}

void AdamState::reset(const std::vector<Tensor*>& params) {
    step = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i]->count(), 0.0);
        v[i].assign(params[i]->count(), 0.0);
    }
}

void AdamState::apply(const std::vector<Tensor*>& params, const TrainConfig& cfg) {
    step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        auto& mi = m[i];
        auto& vi = v[i];
        for (size_t j = 0; j < p.count(); ++j) {
            const double g = p.g[j];
            mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * g;
            vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * g * g;
            const double mh = mi[j] / bc1;
            const double vh = vi[j] / bc2;
            p.v[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    }
}

Trainer::Trainer(DiTModel& model, const TrainingData& data, const TrainConfig& cfg)
    : model_(model), data_(data), cfg_(cfg) {
    if (!model_.has_lora())
        throw ConfigError("training requires injected lora adapters (base stays frozen)");
    if (data_.sets.empty()) throw DataError("no training data");
    trainable_ = model_.trainable_parameters();
    adam_.reset(trainable_);
    data_rng_ = RngStream(derive_seed(cfg.seed, 0xda7aull));
    noise_rng_ = RngStream(derive_seed(cfg.seed, 0x0153ull));
}

void Trainer::restore_counters(int epoch, int64_t iteration) {
    epoch_ = epoch;
    iteration_ = iteration;
}

VisualSentence Trainer::draw_sentence(TaskKind* out_task, ContextType* out_context) {
    TaskKind task;
    switch (cfg_.regime) {
        case Regime::co_train_all: {
            const auto tasks = data_.distinct_tasks();
            task = tasks[static_cast<size_t>(data_rng_.index(static_cast<int>(tasks.size())))];
            break;
        }
        default:
            task = data_.sets[0].kind;
            break;
    }

    ContextType context;
    if (cfg_.regime == Regime::per_task_per_context) {
        context = data_.sets[0].context;
    } else {
        context = sample_context(task, data_rng_);
    }

    const TaskDataset* set = data_.find(task, context);
    if (set == nullptr)
        throw DataError(std::string("no dataset for task ") + to_string(task) + " context " +
                        to_string(context));

    const int needed = std::max(cfg_.shots / 2 - 1, 1);
    if (static_cast<int>(set->samples.size()) < needed)
        throw DataError("dataset too small for shot count");

    // distinct sample indices, partial Fisher-Yates over the index range
    std::vector<int> idx(set->samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    for (int i = 0; i < needed; ++i) {
        const int j = i + data_rng_.index(static_cast<int>(idx.size()) - i);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    std::vector<TaskSample> picked;
    picked.reserve(static_cast<size_t>(needed));
    for (int i = 0; i < needed; ++i)
        picked.push_back(set->samples[static_cast<size_t>(idx[static_cast<size_t>(i)])]);

    if (out_task != nullptr) *out_task = task;
    if (out_context != nullptr) *out_context = context;
    return compose(picked, context, ShotConfig{cfg_.shots});
}

double Trainer::step() {
    model_.zero_grad();
    double mean_loss = 0.0;
    TaskKind task = TaskKind::depth_map;
    ContextType context = ContextType::II;

    for (int b = 0; b < cfg_.batch_size; ++b) {
        const VisualSentence sentence = draw_sentence(&task, &context);
        const TokenGrid clean = tokenize(sentence, model_.config().patch,
                                         model_.config().per_clip_time);

        double t;
        if (cfg_.timestep == TimestepDist::uniform) {
            t = data_rng_.uniform_open0();
        } else {
            t = 1.0 / (1.0 + std::exp(-data_rng_.normal()));
            t = std::max(t, 1e-6);
        }

        const NoisySentence noisy = noising(clean, t, noise_rng_.raw());
        const PromptEmbedding prompt = model_.prompt_embedding(task);
        const Mat out = model_.forward(noisy.grid, t, prompt, &ws_);
        Mat d_out;
        const double loss = velocity_loss(out, noisy.epsilon, clean.tokens, clean.target_mask,
                                          &d_out);
        if (!std::isfinite(loss))
            throw NumericalError("non-finite loss at iteration " + std::to_string(iteration_) +
                                 " (task " + to_string(task) + ", t=" + std::to_string(t) + ")");
        // scale batch members into a mean
        if (cfg_.batch_size > 1)
            for (size_t i = 0; i < d_out.size(); ++i) d_out.data()[i] /= cfg_.batch_size;
        model_.backward(ws_, d_out);
        mean_loss += loss / cfg_.batch_size;
    }

    adam_.apply(trainable_, cfg_);
    iteration_ += 1;

    IterationLog row{iteration_, epoch_, task, context, mean_loss};
    history_.push_back(row);
    return mean_loss;
}

void Trainer::run(const IterHook& on_iter, const EpochHook& on_epoch) {
    const int first_epoch = epoch_;
    for (int e = first_epoch; e < cfg_.epochs; ++e) {
        epoch_ = e;
        for (int i = 0; i < cfg_.iters_per_epoch; ++i) {
            step();
            if (on_iter) on_iter(history_.back());
        }
        epoch_ = e + 1;
        if (on_epoch) on_epoch(epoch_);
    }
}

}  // namespace visent
