#include "nova/trainer.hpp"

#include "nova/error.hpp"
#include "nova/objectives.hpp"
#include "nova/parallel.hpp"
#include "nova/rng.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Eigenvalues>
#include <limits>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace nova::trainer {

namespace fs = std::filesystem;

Objective parse_objective(const std::string& s) {
    if (s == "nova") return Objective::nova;
    if (s == "infonce") return Objective::infonce;
    if (s == "siglip") return Objective::siglip;
    throw ConfigError("unknown objective '" + s + "' (expected nova, infonce or siglip)");
}

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::nova: return "nova";
        case Objective::infonce: return "infonce";
        case Objective::siglip: return "siglip";
    }
    return "?";
}

SigregScale parse_sigreg_scale(const std::string& s) {
    if (s == "mean") return SigregScale::mean;
    if (s == "samples") return SigregScale::samples;
    throw ConfigError("unknown sigreg scale '" + s + "' (expected mean or samples)");
}

std::string sigreg_scale_name(SigregScale s) { return s == SigregScale::mean ? "mean" : "samples"; }

HeadInit parse_head_init(const std::string& s) {
    if (s == "normal") return HeadInit::normal;
    if (s == "whiten") return HeadInit::whiten;
    throw ConfigError("unknown head init '" + s + "' (expected normal or whiten)");
}

std::string head_init_name(HeadInit h) { return h == HeadInit::normal ? "normal" : "whiten"; }

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (epochs < 0) fail("train.epochs must be >= 0");
    if (batch_size < 2) fail("train.batch_size must be >= 2");
    if (!(lr_min > 0.0 && lr_max >= lr_min)) fail("train: need lr_max >= lr_min > 0");
    if (!(warmup_epochs >= 0.0)) fail("train.warmup_epochs must be >= 0");
    if (!(clip_norm > 0.0)) fail("train.clip_norm must be > 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail("train.lambda must be in [0, 1]");
    if (views != augment.view_count())
        fail("train.views (" + std::to_string(views) + ") must equal global + local crop counts (" +
             std::to_string(augment.view_count()) + ")");
    if (augment.global.count < 1) fail("data.global_crops must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0 &&
          adam.weight_decay >= 0.0))
        fail("train: invalid optimizer settings");
    if (sigreg.directions < 1) fail("sigreg.directions must be >= 1");
    if (text_dim < 1) fail("model.text_dim must be >= 1");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) fail("data.eval_fraction must be in [0, 1)");
    try {
        multicrop::validate(augment);
        vit.validate();
        predictor.validate();
        if (sigreg.mode == sigreg::Mode::grid) sigreg::validate_grid(sigreg.grid);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    for (const auto* crop : {&augment.global, &augment.local})
        if (crop->count > 0 && crop->size % vit.patch_size != 0)
            fail("crop size " + std::to_string(crop->size) + " is not divisible by model.patch_size");
}

optim::Schedule TrainConfig::schedule() const { return {lr_max, lr_min, warmup_epochs, epochs}; }

std::uint64_t TrainConfig::hash() const {
    std::ostringstream s;
    s.precision(17);
    s << objective_name(objective) << '|' << epochs << '|' << batch_size << '|' << lr_max << '|' << lr_min << '|'
      << warmup_epochs << '|' << clip_norm << '|' << lambda << '|' << seed << '|' << views << '|' << adam.beta1 << '|'
      << adam.beta2 << '|' << adam.eps << '|' << adam.weight_decay << '|' << sigreg.directions << '|'
      << static_cast<int>(sigreg.mode) << '|' << sigreg.grid.t_points.size() << '|'
      << (sigreg.grid.t_points.empty() ? 0.0 : sigreg.grid.t_points.back()) << '|' << sigreg.resample_each_step
      << '|' << sigreg_scale_name(sigreg_scale) << '|';
    for (const auto* c : {&augment.global, &augment.local})
        s << c->count << ',' << c->size << ',' << c->scale_min << ',' << c->scale_max << '|';
    s << augment.jitter_range << '|' << augment.rotation_deg << '|' << vit.patch_size << ',' << vit.depth << ','
      << vit.heads << ',' << vit.width << ',' << vit.mlp_ratio << ',' << vit.image_size << ',' << vit.channels << '|'
      << predictor.layers << ',' << predictor.hidden << ',' << predictor.out_dim << ',' << predictor.bn_momentum
      << ',' << predictor.bn_eps << '|' << text_dim << '|' << text_seed << '|' << head_init_name(head_init) << '|' << split_seed << '|' << eval_fraction;
    return fnv1a64(s.str());
}

// ---------------------------------------------------------------------------

ViewInput make_view_input(const std::vector<const GrayImage8*>& images, const std::vector<std::string>& texts,
                          const multicrop::AugmentConfig& aug, const std::vector<std::uint64_t>& sample_seeds) {
    ViewInput in;
    in.items.resize(images.size());
    in.texts = texts;
    parallel_for(images.size(), [&](std::size_t i) {
        in.items[i] = multicrop::make_views(to_unit_image(*images[i]), aug, sample_seeds[i]);
    });
    return in;
}

namespace {

template <typename T>
model::ImageBatch<T> gather(const ViewInput& in, int first_view, int count) {
    std::vector<const Image*> ptrs;
    for (int v = first_view; v < first_view + count; ++v)
        for (const auto& item : in.items) ptrs.push_back(&item.views[static_cast<std::size_t>(v)]);
    return model::ImageBatch<T>::from_images(ptrs);
}

void require_finite(double v, std::int64_t step, const char* term) {
    if (!std::isfinite(v))
        throw NumericalError(step, term, "non-finite " + std::string(term) + " at step " + std::to_string(step));
}

}  // namespace

template <typename T>
LossParts forward_backward(model::NovaModel<T>& m, const ViewInput& in, const TrainConfig& cfg, std::int64_t step,
                           bool backward) {
    const auto B = static_cast<Eigen::Index>(in.items.size());
    if (B < 2) throw std::invalid_argument("train_step: batch size must be >= 2");
    if (static_cast<Eigen::Index>(in.texts.size()) != B) throw std::invalid_argument("train_step: one text per image");
    const int G = cfg.augment.global.count;
    const int L = cfg.augment.local.count;
    const int V = G + L;

    // Encode each resolution group and predict; the predictor sees each group
    // as its own batch.
    struct Group {
        model::ViTCache<T> vit;
        model::PredictorCache<T> pred;
        Matrix<T> out;
    };
    Group groups[2];
    const int counts[2] = {G, L};
    for (int g = 0; g < 2; ++g) {
        if (counts[g] == 0) continue;
        const auto batch = gather<T>(in, g == 0 ? 0 : G, counts[g]);
        const Matrix<T> emb = m.vit.forward(batch, groups[g].vit);
        groups[g].out = m.predictor.forward(emb, model::Mode::train, groups[g].pred);
    }
    const Eigen::Index D = groups[0].out.cols();
    objectives::ViewPredictions preds;
    preds.views = V;
    preds.rows.resize(V * B, D);
    preds.rows.topRows(G * B) = groups[0].out.template cast<double>();
    if (L > 0) preds.rows.bottomRows(L * B) = groups[1].out.template cast<double>();

    Matrix<T> pooled;
    const MatrixD anchor = m.encode_text(in.texts, pooled).template cast<double>();
    // Non-finite inputs make the loss non-finite; report it as such.
    if (!preds.rows.allFinite() || !anchor.allFinite())
        require_finite(std::numeric_limits<double>::quiet_NaN(), step,
                       cfg.objective == Objective::nova ? "loss_mse" : "loss_contrastive");

    LossParts parts;
    MatrixD grad_preds, grad_anchor;
    if (cfg.objective == Objective::nova) {
        const auto mse = objectives::alignment_mse(preds, anchor);
        MatrixD joint(preds.rows.rows() + B, D);
        joint << preds.rows, anchor;
        const bool sig_grad = backward && cfg.lambda > 0.0;
        auto sig = sigreg::sigreg_loss(joint, cfg.sigreg, step, sig_grad);
        if (cfg.sigreg_scale == SigregScale::samples) {
            const auto k = static_cast<double>(joint.rows());
            sig.loss *= k;
            if (sig_grad) sig.grad *= k;
        }
        parts.mse = mse.loss;
        parts.sigreg = sig.loss;
        require_finite(parts.mse, step, "loss_mse");
        require_finite(parts.sigreg, step, "loss_sigreg");
        parts.total = objectives::nova_loss(parts.mse, parts.sigreg, {cfg.lambda});
        if (backward) {
            grad_preds = (1.0 - cfg.lambda) * mse.grad_preds;
            grad_anchor = (1.0 - cfg.lambda) * mse.grad_anchor;
            if (sig_grad) {
                grad_preds += cfg.lambda * sig.grad.topRows(V * B);
                grad_anchor += cfg.lambda * sig.grad.bottomRows(B);
            }
        }
    } else {
        // One image embedding per item: the mean of its view predictions.
        MatrixD v_raw = MatrixD::Zero(B, D);
        for (int v = 0; v < V; ++v) v_raw += preds.rows.middleRows(v * B, B);
        v_raw /= V;
        const MatrixD vn = objectives::normalize_rows(v_raw);
        const MatrixD tn = objectives::normalize_rows(anchor);
        const double scale = std::exp(static_cast<double>(m.log_tau.value(0, 0)));
        const objectives::TemperatureBias tb{scale, static_cast<double>(m.logit_bias.value(0, 0))};
        const auto res = cfg.objective == Objective::infonce ? objectives::infonce_loss(vn, tn, tb)
                                                             : objectives::siglip_loss(vn, tn, tb);
        parts.contrastive = parts.total = res.loss;
        require_finite(parts.contrastive, step, "loss_contrastive");
        if (backward) {
            const MatrixD gv = objectives::normalize_rows_backward(v_raw, res.grad_v) / V;
            grad_preds.resize(V * B, D);
            for (int v = 0; v < V; ++v) grad_preds.middleRows(v * B, B) = gv;
            grad_anchor = objectives::normalize_rows_backward(anchor, res.grad_t);
            m.log_tau.grad(0, 0) += static_cast<T>(res.grad_tau * scale);
            m.logit_bias.grad(0, 0) += static_cast<T>(res.grad_bias);
        }
    }

    if (backward) {
        for (int g = 0; g < 2; ++g) {
            if (counts[g] == 0) continue;
            const Matrix<T> gp = (g == 0 ? grad_preds.topRows(G * B) : grad_preds.bottomRows(L * B)).template cast<T>();
            m.vit.backward(m.predictor.backward(gp, groups[g].pred), groups[g].vit);
        }
        m.backward_text(pooled, grad_anchor.template cast<T>());
    }
    return parts;
}

template <typename T>
std::unique_ptr<model::NovaModel<T>> make_model(const TrainConfig& cfg, const std::vector<std::string>& vocabulary) {
    model::TextAnchorTable table(vocabulary, cfg.text_dim, cfg.text_seed);
    auto m = std::make_unique<model::NovaModel<T>>(cfg.vit, cfg.predictor, std::move(table),
                                                   derive_seed(cfg.seed, fnv1a64("model")));
    if (cfg.objective == Objective::infonce) {
        m->log_tau.value(0, 0) = static_cast<T>(std::log(0.07));
    } else if (cfg.objective == Objective::siglip) {
        m->log_tau.value(0, 0) = static_cast<T>(std::log(10.0));
        m->logit_bias.value(0, 0) = static_cast<T>(-10.0);
    }
    return m;
}

template <typename T>
void whiten_text_head(model::NovaModel<T>& m, const std::vector<std::string>& texts, double ridge) {
    if (texts.empty()) throw std::invalid_argument("whiten_text_head: no texts");
    if (!(ridge > 0.0)) throw std::invalid_argument("whiten_text_head: ridge must be > 0");
    const MatrixD X = m.table.pool(texts);
    const MatrixD W = m.head.weight.value.template cast<double>();
    const RowVector<double> mu = X.colwise().mean();
    const MatrixD A = (X.rowwise() - mu) * W;
    Eigen::SelfAdjointEigenSolver<MatrixD> es(A.transpose() * A / static_cast<double>(A.rows()));
    const double floor = ridge * std::max(es.eigenvalues().maxCoeff(), 0.0);
    if (!(floor > 0.0)) return;  // all captions pool to the same vector
    const Eigen::VectorXd inv_sqrt = (es.eigenvalues().array().max(0.0) + floor).rsqrt();
    const MatrixD M = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    const MatrixD Wm = W * M;
    m.head.weight.value = Wm.cast<T>();
    m.head.bias.value = (-(mu * Wm)).cast<T>();
}

template void whiten_text_head(model::NovaModel<float>&, const std::vector<std::string>&, double);
template void whiten_text_head(model::NovaModel<double>&, const std::vector<std::string>&, double);

// ---------------------------------------------------------------------------

namespace {

TrainConfig with_derived_seeds(TrainConfig cfg) {
    cfg.sigreg.seed = derive_seed(cfg.seed, fnv1a64("sigreg"));
    cfg.augment.seed = derive_seed(cfg.seed, fnv1a64("augment"));
    return cfg;
}

checkpoint::TensorRecord record(std::string name, const Matrix<float>& m) {
    return {std::move(name),
            {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
            std::vector<float>(m.data(), m.data() + m.size())};
}

checkpoint::TensorRecord scalars(std::string name, std::vector<float> values) {
    return {std::move(name), {static_cast<std::uint32_t>(values.size())}, std::move(values)};
}

void restore(Matrix<float>& dst, const checkpoint::TensorRecord& r) {
    if (r.dims.size() != 2 || r.dims[0] != dst.rows() || r.dims[1] != dst.cols())
        throw CorruptionError("checkpoint: shape mismatch for " + r.name);
    std::copy(r.data.begin(), r.data.end(), dst.data());
}

std::vector<checkpoint::TensorRecord> model_records(model::NovaModel<float>& m, std::int64_t step, std::uint64_t seed,
                                                    std::uint64_t hash) {
    std::vector<checkpoint::TensorRecord> out;
    out.push_back(scalars("meta.step", checkpoint::encode_u64(static_cast<std::uint64_t>(step))));
    out.push_back(scalars("meta.seed", checkpoint::encode_u64(seed)));
    out.push_back(scalars("meta.config_hash", checkpoint::encode_u64(hash)));
    const auto& v = m.vit.config();
    out.push_back(scalars("meta.vit", {float(v.patch_size), float(v.depth), float(v.heads), float(v.width),
                                       float(v.mlp_ratio), float(v.image_size), float(v.channels)}));
    const auto& p = m.predictor.config();
    out.push_back(scalars("meta.predictor", {float(p.layers), float(p.hidden), float(p.out_dim),
                                             float(p.bn_momentum), float(p.bn_eps)}));
    for (const auto& [tok, row] : m.table.index()) out.push_back(scalars("text.vocab/" + tok, {float(row)}));
    for (auto* prm : m.parameters()) out.push_back(record(prm->name, prm->value));
    for (auto& [name, buf] : m.buffers()) out.push_back(record(name, *buf));
    return out;
}

std::map<std::string, const checkpoint::TensorRecord*> by_name(const std::vector<checkpoint::TensorRecord>& recs) {
    std::map<std::string, const checkpoint::TensorRecord*> out;
    for (const auto& r : recs)
        if (!out.emplace(r.name, &r).second) throw CorruptionError("checkpoint: duplicate record " + r.name);
    return out;
}

const checkpoint::TensorRecord& need(const std::map<std::string, const checkpoint::TensorRecord*>& recs,
                                     const std::string& name) {
    auto it = recs.find(name);
    if (it == recs.end()) throw CorruptionError("checkpoint: missing record " + name);
    return *it->second;
}

void restore_model(model::NovaModel<float>& m, const std::map<std::string, const checkpoint::TensorRecord*>& recs) {
    for (auto* prm : m.parameters()) restore(prm->value, need(recs, prm->name));
    for (auto& [name, buf] : m.buffers()) restore(*buf, need(recs, name));
}

int as_int(float v) { return static_cast<int>(std::lround(v)); }

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const std::vector<std::string>& vocabulary, std::int64_t steps_per_epoch)
    : cfg_(with_derived_seeds(cfg)), steps_per_epoch_(steps_per_epoch) {
    cfg_.validate();
    model_ = make_model<float>(cfg_, vocabulary);
    opt_ = optim::AdamW<float>(model_->parameters(), cfg_.adam);
}

StepRecord Trainer::train_step(const ViewInput& batch, std::int64_t step) {
    StepRecord rec;
    rec.step = step;
    rec.epoch = static_cast<int>(step / std::max<std::int64_t>(steps_per_epoch_, 1));
    rec.lr = optim::cosine_lr(step, cfg_.schedule(), steps_per_epoch_);
    model_->zero_grad();
    const LossParts parts = forward_backward(*model_, batch, cfg_, step, true);
    rec.loss_total = parts.total;
    rec.loss_mse = parts.mse;
    rec.loss_sigreg = parts.sigreg;
    rec.loss_contrastive = parts.contrastive;
    const auto params = model_->parameters();
    rec.grad_norm = optim::clip_grad_norm(params, cfg_.clip_norm);
    rec.clipped_norm = optim::global_grad_norm(params);
    if (!std::isfinite(rec.grad_norm))
        throw NumericalError(step, "gradient", "non-finite gradient norm at step " + std::to_string(step));
    opt_.step(params, rec.lr);
    return rec;
}

void Trainer::save(const fs::path& path, std::int64_t step) {
    auto recs = model_records(*model_, step, cfg_.seed, cfg_.hash());
    const auto params = model_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        recs.push_back(record("adam.m/" + params[i]->name, opt_.first_moments()[i]));
        recs.push_back(record("adam.v/" + params[i]->name, opt_.second_moments()[i]));
    }
    recs.push_back(scalars("adam.t", checkpoint::encode_u64(static_cast<std::uint64_t>(opt_.steps()))));
    checkpoint::save_records(path, recs);
}

std::int64_t Trainer::load(const fs::path& path) {
    const auto recs = checkpoint::load_records(path);
    const auto named = by_name(recs);
    if (checkpoint::decode_u64(need(named, "meta.config_hash").data) != cfg_.hash())
        throw CorruptionError("checkpoint " + path.string() + " was written by a different configuration");
    restore_model(*model_, named);
    const auto params = model_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        restore(opt_.first_moments()[i], need(named, "adam.m/" + params[i]->name));
        restore(opt_.second_moments()[i], need(named, "adam.v/" + params[i]->name));
    }
    opt_.set_steps(static_cast<std::int64_t>(checkpoint::decode_u64(need(named, "adam.t").data)));
    return static_cast<std::int64_t>(checkpoint::decode_u64(need(named, "meta.step").data));
}

LoadedModel load_model(const fs::path& path) {
    const auto recs = checkpoint::load_records(path);
    const auto named = by_name(recs);
    const auto& v = need(named, "meta.vit").data;
    const auto& p = need(named, "meta.predictor").data;
    if (v.size() != 7 || p.size() != 5) throw CorruptionError("checkpoint: malformed model metadata");
    model::ViTConfig vc;
    vc.patch_size = as_int(v[0]), vc.depth = as_int(v[1]), vc.heads = as_int(v[2]), vc.width = as_int(v[3]);
    vc.mlp_ratio = as_int(v[4]), vc.image_size = as_int(v[5]), vc.channels = as_int(v[6]);
    model::PredictorConfig pc;
    pc.layers = as_int(p[0]), pc.hidden = as_int(p[1]), pc.out_dim = as_int(p[2]);
    pc.bn_momentum = p[3], pc.bn_eps = p[4];

    std::map<std::string, int> index;
    const std::string prefix = "text.vocab/";
    for (const auto& r : recs)
        if (r.name.rfind(prefix, 0) == 0) {
            if (r.data.size() != 1) throw CorruptionError("checkpoint: malformed vocabulary record");
            index[r.name.substr(prefix.size())] = as_int(r.data[0]);
        }
    const auto& table_rec = need(named, "text.table");
    if (table_rec.dims.size() != 2) throw CorruptionError("checkpoint: malformed text table");
    MatrixD table(table_rec.dims[0], table_rec.dims[1]);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = table_rec.data[static_cast<std::size_t>(i)];

    LoadedModel out;
    try {
        out.model = std::make_unique<model::NovaModel<float>>(vc, pc, model::TextAnchorTable(index, table), 0);
    } catch (const std::invalid_argument& e) {
        throw CorruptionError(std::string("checkpoint: ") + e.what());
    }
    restore_model(*out.model, named);
    out.step = static_cast<std::int64_t>(checkpoint::decode_u64(need(named, "meta.step").data));
    out.seed = checkpoint::decode_u64(need(named, "meta.seed").data);
    out.config_hash = checkpoint::decode_u64(need(named, "meta.config_hash").data);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_header(Objective o) {
    return o == Objective::nova ? "step,epoch,lr,loss_total,loss_mse,loss_sigreg"
                                : "step,epoch,lr,loss_total,loss_contrastive";
}

std::string metrics_row(const StepRecord& r, Objective o) {
    std::string s = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt(r.lr) + "," + fmt(r.loss_total);
    if (o == Objective::nova) return s + "," + fmt(r.loss_mse) + "," + fmt(r.loss_sigreg);
    return s + "," + fmt(r.loss_contrastive);
}

MatrixD predict_embeddings(model::NovaModel<float>& m, const std::vector<Image>& images, int chunk) {
    const int size = m.vit.config().image_size;
    const auto n = static_cast<Eigen::Index>(images.size());
    MatrixD out(n, m.predictor.config().out_dim);
    for (Eigen::Index begin = 0; begin < n; begin += chunk) {
        const Eigen::Index end = std::min<Eigen::Index>(n, begin + chunk);
        std::vector<Image> views(static_cast<std::size_t>(end - begin));
        parallel_for(views.size(), [&](std::size_t i) {
            views[i] = multicrop::center_view(images[static_cast<std::size_t>(begin) + i], size);
        });
        std::vector<const Image*> ptrs;
        for (const auto& v : views) ptrs.push_back(&v);
        model::ViTCache<float> vc;
        model::PredictorCache<float> pc;
        const MatrixF e = m.vit.forward(model::ImageBatch<float>::from_images(ptrs), vc);
        out.middleRows(begin, end - begin) = m.predictor.forward(e, model::Mode::eval, pc).cast<double>();
    }
    return out;
}

RunResult run_training(const TrainConfig& cfg_in, const synthdata::Manifest& data, const fs::path& out_dir,
                       const RunOptions& options) {
    cfg_in.validate();
    if (data.records.empty()) throw DataError("training data is empty");
    const auto split = synthdata::split_indices(data.records.size(), cfg_in.split_seed, cfg_in.eval_fraction);
    const auto batch = static_cast<std::size_t>(cfg_in.batch_size);
    const auto steps_per_epoch = static_cast<std::int64_t>(split.train.size() / batch);
    if (steps_per_epoch < 1)
        throw DataError("training split has " + std::to_string(split.train.size()) +
                        " samples, fewer than one batch of " + std::to_string(batch));

    std::vector<GrayImage8> images(data.records.size());
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < data.records.size(); ++i) texts.push_back(data.records[i].text);
    {
        std::vector<std::string> errors(images.size());
        parallel_for(images.size(), [&](std::size_t i) {
            try {
                images[i] = read_gray_image(data.resolve(data.records[i]));
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
        for (const auto& e : errors)
            if (!e.empty()) throw DataError(e);
    }
    std::vector<std::string> train_texts;
    for (std::size_t i : split.train) train_texts.push_back(texts[i]);
    const auto vocabulary = model::build_vocabulary(train_texts, cfg_in.eval_classes);

    Trainer trainer(cfg_in, vocabulary, steps_per_epoch);
    const TrainConfig& cfg = trainer.config();
    fs::create_directories(out_dir);

    if (cfg.head_init == HeadInit::whiten && !options.resume) whiten_text_head(trainer.model(), train_texts);
    std::int64_t start = 0;
    std::vector<std::string> kept_rows;
    std::vector<std::string> kept_eval_rows;
    if (options.resume) {
        start = trainer.load(*options.resume);
        auto keep = [&](const fs::path& p, std::vector<std::string>& rows, std::size_t step_col) {
            std::ifstream in(p);
            std::string line;
            if (!std::getline(in, line)) return;
            while (std::getline(in, line)) {
                std::stringstream ss(line);
                std::string field;
                for (std::size_t c = 0; c <= step_col; ++c) std::getline(ss, field, ',');
                if (!field.empty() && std::stoll(field) < start) rows.push_back(line);
            }
        };
        keep(out_dir / "metrics.csv", kept_rows, 0);
        keep(out_dir / "eval.csv", kept_eval_rows, 1);
    }

    std::vector<Image> eval_images;
    std::vector<std::map<std::string, int>> eval_labels;
    const bool evaluating = cfg.eval_each_epoch && !split.eval.empty() && !cfg.eval_classes.empty();
    if (evaluating) {
        for (std::size_t i : split.eval) eval_images.push_back(to_unit_image(images[i]));
        eval_labels = zeroshot::label_maps(data, split.eval);
    }

    std::ofstream metrics(out_dir / "metrics.csv", std::ios::trunc);
    metrics << metrics_header(cfg.objective) << '\n';
    for (const auto& r : kept_rows) metrics << r << '\n';
    std::ofstream eval_csv;
    if (evaluating) {
        eval_csv.open(out_dir / "eval.csv", std::ios::trunc);
        eval_csv << "epoch,step,macro_auc";
        for (const auto& c : cfg.eval_classes) eval_csv << ",auc_" << c;
        eval_csv << '\n';
        for (const auto& r : kept_eval_rows) eval_csv << r << '\n';
    }

    RunResult result;
    result.steps_per_epoch = steps_per_epoch;
    const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;
    std::int64_t step = start;
    std::vector<std::size_t> order;
    int order_epoch = -1;
    while (step < total && (options.stop_after_step < 0 || step < options.stop_after_step)) {
        const int epoch = static_cast<int>(step / steps_per_epoch);
        if (epoch != order_epoch) {
            order = split.train;
            Rng gen(derive_seed(cfg.seed, fnv1a64("shuffle"), static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), gen);
            order_epoch = epoch;
        }
        const auto pos = static_cast<std::size_t>(step % steps_per_epoch) * batch;
        std::vector<const GrayImage8*> imgs;
        std::vector<std::string> txt;
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = pos; i < pos + batch; ++i) {
            imgs.push_back(&images[order[i]]);
            txt.push_back(texts[order[i]]);
            seeds.push_back(derive_seed(static_cast<std::uint64_t>(epoch), order[i]));
        }
        const StepRecord rec = trainer.train_step(make_view_input(imgs, txt, cfg.augment, seeds), step);
        metrics << metrics_row(rec, cfg.objective) << '\n';
        metrics.flush();
        result.steps.push_back(rec);
        if (options.on_step) options.on_step(rec);
        ++step;

        if (evaluating && step % steps_per_epoch == 0) {
            EvalRecord ev;
            ev.epoch = epoch;
            ev.step = step - 1;
            ev.report = zeroshot::evaluate(trainer.model(), eval_images, eval_labels, cfg.eval_classes);
            eval_csv << ev.epoch << ',' << ev.step << ',' << fmt(ev.report.macro_auc);
            for (const auto& c : ev.report.classes) {
                const auto& a = ev.report.per_class.at(c);
                eval_csv << ',' << (a ? fmt(*a) : std::string("undefined"));
            }
            eval_csv << '\n';
            eval_csv.flush();
            result.evals.push_back(ev);
            if (options.on_eval) options.on_eval(ev);
        }
    }
    result.final_step = step;
    result.checkpoint = out_dir / "checkpoint.bin";
    trainer.save(result.checkpoint, step);
    return result;
}

template LossParts forward_backward(model::NovaModel<float>&, const ViewInput&, const TrainConfig&, std::int64_t, bool);
template LossParts forward_backward(model::NovaModel<double>&, const ViewInput&, const TrainConfig&, std::int64_t,
                                    bool);
template std::unique_ptr<model::NovaModel<float>> make_model(const TrainConfig&, const std::vector<std::string>&);
template std::unique_ptr<model::NovaModel<double>> make_model(const TrainConfig&, const std::vector<std::string>&);

}  // namespace nova::trainer
