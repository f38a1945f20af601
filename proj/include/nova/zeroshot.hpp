#pragma once
// Zero-shot evaluation with positive/negative prompt pairs per class.

#include "nova/model.hpp"
#include "nova/synthdata.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nova::zeroshot {

/// The five evaluation pathologies.
std::vector<std::string> default_classes();

struct PromptPair {
    std::string class_name;
    std::string positive_text;  // "{class}" lowercased
    std::string negative_text;  // "no {class}" lowercased
    RowVector<double> t_plus;
    RowVector<double> t_minus;
};

template <typename T>
std::vector<PromptPair> build_prompt_pairs(const std::vector<std::string>& classes, const model::NovaModel<T>& m);

struct ClassScores {
    double s_plus = 0.0;
    double s_minus = 0.0;
    double probability = 0.5;
};

/// Softmax over (v . t+, v . t-). std::invalid_argument unless |v| = 1
/// within 1e-6.
ClassScores class_probability(const RowVector<double>& v, const PromptPair& pair);

/// Mann-Whitney statistic with midranks for ties. UndefinedMetricError
/// unless both labels occur.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
    std::vector<std::string> classes;                      // evaluated order
    std::map<std::string, std::optional<double>> per_class;  // empty optional: undefined
    std::vector<std::string> warnings;
    double macro_auc = 0.0;  // NaN when no class is defined
};

/// Unit-norm predictor outputs for a single center view of each image, eval
/// mode, processed in chunks of `chunk` images.
template <typename T>
MatrixD embed_images(model::NovaModel<T>& m, const std::vector<Image>& images, int chunk = 32);

/// Classes missing from the labels, or with a single label value, are marked
/// undefined, excluded from the macro mean and reported as warnings.
template <typename T>
EvalReport evaluate(model::NovaModel<T>& m, const std::vector<Image>& images,
                    const std::vector<std::map<std::string, int>>& labels, const std::vector<std::string>& classes);

/// Scores already-computed unit embeddings.
EvalReport evaluate_embeddings(const MatrixD& embeddings, const std::vector<PromptPair>& pairs,
                               const std::vector<std::map<std::string, int>>& labels);

/// Label maps for manifest records, keyed by class name compared case-insensitively
/// through the lowercased name.
std::vector<std::map<std::string, int>> label_maps(const synthdata::Manifest& m, std::span<const std::size_t> rows);

void write_report_csv(const EvalReport& r, const std::filesystem::path& path);
void write_report_json(const EvalReport& r, std::uint64_t seed, const std::string& checkpoint_hash,
                       const std::filesystem::path& path);

}  // namespace nova::zeroshot
