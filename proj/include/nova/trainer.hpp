#pragma once
// Training loop: multi-crop views, encoder and predictor, frozen-text
// anchors, the NOVA or contrastive objective, clipping and AdamW.

#include "nova/checkpoint.hpp"
#include "nova/model.hpp"
#include "nova/multicrop.hpp"
#include "nova/optim.hpp"
#include "nova/sigreg.hpp"
#include "nova/synthdata.hpp"
#include "nova/zeroshot.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nova::trainer {

enum class Objective { nova, infonce, siglip };
Objective parse_objective(const std::string& s);
std::string objective_name(Objective o);

/// How the sketched statistic enters the loss: its plain mean over
/// directions, or that mean multiplied by the number of embeddings it was
/// computed on (the scale of the classical test statistic n * T).
enum class SigregScale { mean, samples };
SigregScale parse_sigreg_scale(const std::string& s);
std::string sigreg_scale_name(SigregScale s);

/// Initialization of the text projection head: the generic truncated normal,
/// or whitened against the pooled training captions (see whiten_text_head).
enum class HeadInit { normal, whiten };
HeadInit parse_head_init(const std::string& s);
std::string head_init_name(HeadInit h);

struct TrainConfig {
    Objective objective = Objective::nova;
    int epochs = 20;
    int batch_size = 64;
    double lr_max = 1e-4;
    double lr_min = 1e-5;
    double warmup_epochs = 1.0;
    double clip_norm = 1.0;
    double lambda = 0.02;
    std::uint64_t seed = 0;
    int views = 8;
    optim::AdamWConfig adam;

    sigreg::SigregConfig sigreg;  // seed is derived from `seed`
    SigregScale sigreg_scale = SigregScale::samples;

    multicrop::AugmentConfig augment;  // seed is derived from `seed`
    model::ViTConfig vit = model::ViTConfig::preset("tiny");
    model::PredictorConfig predictor;
    int text_dim = 128;
    std::uint64_t text_seed = 0;  // the frozen table does not depend on the run seed
    HeadInit head_init = HeadInit::normal;

    std::uint64_t split_seed = 0;
    double eval_fraction = 0.1;
    std::vector<std::string> eval_classes = zeroshot::default_classes();
    bool eval_each_epoch = true;

    void validate() const;  // ConfigError
    optim::Schedule schedule() const;
    /// Stable hash of every field that affects the parameter trajectory.
    std::uint64_t hash() const;
};

/// One optimizer step as logged.
struct StepRecord {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_mse = 0.0;          // nova only
    double loss_sigreg = 0.0;       // nova only
    double loss_contrastive = 0.0;  // infonce / siglip only
    double grad_norm = 0.0;         // before clipping
    double clipped_norm = 0.0;
};

struct EvalRecord {
    int epoch = 0;
    std::int64_t step = 0;
    zeroshot::EvalReport report;
};

/// Loss terms of one forward pass (all in double).
struct LossParts {
    double total = 0.0;
    double mse = 0.0;
    double sigreg = 0.0;
    double contrastive = 0.0;
};

/// Views for one batch: item b's views in views[b], globals first.
struct ViewInput {
    std::vector<multicrop::ViewBatch> items;
    std::vector<std::string> texts;
};

ViewInput make_view_input(const std::vector<const GrayImage8*>& images, const std::vector<std::string>& texts,
                          const multicrop::AugmentConfig& aug, const std::vector<std::uint64_t>& sample_seeds);

/// Forward pass of the configured objective; with `backward` set, gradients
/// of the total loss are accumulated into the model's parameters (which the
/// caller zeroes). NumericalError naming the term when a loss is not finite.
template <typename T>
LossParts forward_backward(model::NovaModel<T>& m, const ViewInput& in, const TrainConfig& cfg, std::int64_t step,
                           bool backward);

/// Constructs the model for a config and vocabulary, with the loss scalars
/// initialized for the objective.
template <typename T>
std::unique_ptr<model::NovaModel<T>> make_model(const TrainConfig& cfg, const std::vector<std::string>& vocabulary);

/// Rescales the text head so the anchors of `texts` start centered with unit
/// covariance on the span of their pooled features: W <- W M and b <- -mu W M,
/// where M is the inverse square root of the anchor covariance with a ridge
/// of `ridge` times its largest eigenvalue. Directions the captions do not
/// span stay near zero.
template <typename T>
void whiten_text_head(model::NovaModel<T>& m, const std::vector<std::string>& texts, double ridge = 1e-2);

/// Parameters, optimizer state and step counter of a run.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, const std::vector<std::string>& vocabulary, std::int64_t steps_per_epoch);

    /// One step of the training recipe; the learning rate follows cosine_lr(step).
    StepRecord train_step(const ViewInput& batch, std::int64_t step);

    model::NovaModel<float>& model() { return *model_; }
    optim::AdamW<float>& optimizer() { return opt_; }
    const TrainConfig& config() const { return cfg_; }
    std::int64_t steps_per_epoch() const { return steps_per_epoch_; }

    void save(const std::filesystem::path& path, std::int64_t step);
    /// Restores parameters, running statistics and moments. Returns the
    /// stored step. CorruptionError when the file is malformed or belongs to
    /// a different configuration.
    std::int64_t load(const std::filesystem::path& path);

private:
    TrainConfig cfg_;
    std::unique_ptr<model::NovaModel<float>> model_;
    optim::AdamW<float> opt_;
    std::int64_t steps_per_epoch_;
};

/// Model and metadata recovered from a checkpoint.
struct LoadedModel {
    std::unique_ptr<model::NovaModel<float>> model;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::filesystem::path> resume;  // checkpoint to continue from
    std::int64_t stop_after_step = -1;             // stop once this many steps are done
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const EvalRecord&)> on_eval;
};

struct RunResult {
    std::vector<StepRecord> steps;  // steps run in this call
    std::vector<EvalRecord> evals;
    std::filesystem::path checkpoint;
    std::int64_t steps_per_epoch = 0;
    std::int64_t final_step = 0;
};

/// Trains on the manifest's training split and writes metrics.csv, eval.csv
/// (when evaluating) and checkpoint.bin into out_dir. On resume, rows of an
/// existing metrics.csv before the resumed step are kept.
RunResult run_training(const TrainConfig& cfg, const synthdata::Manifest& data, const std::filesystem::path& out_dir,
                       const RunOptions& options = {});

std::string metrics_header(Objective o);
std::string metrics_row(const StepRecord& r, Objective o);

/// Pooled predictor outputs of one center view per image (eval mode), raw.
MatrixD predict_embeddings(model::NovaModel<float>& m, const std::vector<Image>& images, int chunk = 32);

}  // namespace nova::trainer
