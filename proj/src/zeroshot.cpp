#include "nova/zeroshot.hpp"

#include "nova/error.hpp"
#include "nova/multicrop.hpp"
#include "nova/objectives.hpp"
#include "nova/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace nova::zeroshot {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

RowVector<double> unit(const RowVector<double>& v) {
    const double n = v.norm();
    if (!(n > 0.0)) throw std::domain_error("prompt embedding has zero norm");
    return v / n;
}

}  // namespace

std::vector<std::string> default_classes() {
    return {"Atelectasis", "Cardiomegaly", "Edema", "Pleural Effusion", "Consolidation"};
}

template <typename T>
std::vector<PromptPair> build_prompt_pairs(const std::vector<std::string>& classes, const model::NovaModel<T>& m) {
    if (classes.empty()) throw std::invalid_argument("build_prompt_pairs: empty class list");
    std::vector<std::string> texts;
    for (const auto& c : classes) {
        texts.push_back(lower(c));
        texts.push_back("no " + lower(c));
    }
    const MatrixD emb = m.encode_text(texts).template cast<double>();
    std::vector<PromptPair> pairs;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        PromptPair p;
        p.class_name = classes[i];
        p.positive_text = texts[2 * i];
        p.negative_text = texts[2 * i + 1];
        p.t_plus = unit(emb.row(static_cast<Eigen::Index>(2 * i)));
        p.t_minus = unit(emb.row(static_cast<Eigen::Index>(2 * i + 1)));
        pairs.push_back(std::move(p));
    }
    return pairs;
}

ClassScores class_probability(const RowVector<double>& v, const PromptPair& pair) {
    if (std::abs(v.norm() - 1.0) > 1e-6) throw std::invalid_argument("class_probability: image embedding is not unit norm");
    ClassScores s;
    s.s_plus = v.dot(pair.t_plus);
    s.s_minus = v.dot(pair.t_minus);
    // exp(s+) / (exp(s+) + exp(s-)) written as a logistic of the difference
    s.probability = 1.0 / (1.0 + std::exp(s.s_minus - s.s_plus));
    return s;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of midranks (1-based) of the positives.
    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                rank_sum += midrank;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetricError("roc_auc: needs at least one positive and one negative label");
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

template <typename T>
MatrixD embed_images(model::NovaModel<T>& m, const std::vector<Image>& images, int chunk) {
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
        model::ViTCache<T> vc;
        model::PredictorCache<T> pc;
        const Matrix<T> e = m.vit.forward(model::ImageBatch<T>::from_images(ptrs), vc);
        const Matrix<T> p = m.predictor.forward(e, model::Mode::eval, pc);
        out.middleRows(begin, end - begin) = objectives::normalize_rows(p.template cast<double>());
    }
    return out;
}

EvalReport evaluate_embeddings(const MatrixD& embeddings, const std::vector<PromptPair>& pairs,
                               const std::vector<std::map<std::string, int>>& labels) {
    if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
        throw std::invalid_argument("evaluate: one label map per image required");
    EvalReport report;
    double sum = 0.0;
    int defined = 0;
    for (const auto& pair : pairs) {
        const std::string key = lower(pair.class_name);
        report.classes.push_back(pair.class_name);
        std::vector<double> scores;
        std::vector<int> y;
        bool absent = false;
        for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
            auto it = labels[static_cast<std::size_t>(i)].find(key);
            if (it == labels[static_cast<std::size_t>(i)].end()) {
                absent = true;
                break;
            }
            scores.push_back(class_probability(embeddings.row(i), pair).probability);
            y.push_back(it->second);
        }
        if (absent) {
            report.per_class[pair.class_name] = std::nullopt;
            report.warnings.push_back("class '" + pair.class_name + "' absent from labels; excluded from macro AUC");
            continue;
        }
        try {
            const double auc = roc_auc(scores, y);
            report.per_class[pair.class_name] = auc;
            sum += auc;
            ++defined;
        } catch (const UndefinedMetricError&) {
            report.per_class[pair.class_name] = std::nullopt;
            report.warnings.push_back("class '" + pair.class_name + "' has a single label value; excluded from macro AUC");
        }
    }
    report.macro_auc = defined > 0 ? sum / defined : std::numeric_limits<double>::quiet_NaN();
    return report;
}

template <typename T>
EvalReport evaluate(model::NovaModel<T>& m, const std::vector<Image>& images,
                    const std::vector<std::map<std::string, int>>& labels, const std::vector<std::string>& classes) {
    const auto pairs = build_prompt_pairs(classes, m);
    return evaluate_embeddings(embed_images(m, images), pairs, labels);
}

std::vector<std::map<std::string, int>> label_maps(const synthdata::Manifest& m, std::span<const std::size_t> rows) {
    std::vector<std::map<std::string, int>> out;
    for (std::size_t r : rows) {
        std::map<std::string, int> labels;
        for (std::size_t k = 0; k < m.classes.size(); ++k) labels[lower(m.classes[k])] = m.records.at(r).labels[k];
        out.push_back(std::move(labels));
    }
    return out;
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "class,auc\n";
    for (const auto& c : r.classes) {
        out << c << ',';
        const auto& v = r.per_class.at(c);
        if (v) out << *v;
        else out << "undefined";
        out << '\n';
    }
}

void write_report_json(const EvalReport& r, std::uint64_t seed, const std::string& checkpoint_hash,
                       const std::filesystem::path& path) {
    nlohmann::json j;
    j["macro_auc"] = std::isnan(r.macro_auc) ? nlohmann::json(nullptr) : nlohmann::json(r.macro_auc);
    j["seed"] = seed;
    j["checkpoint_hash"] = checkpoint_hash;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& c : r.classes) {
        const auto& v = r.per_class.at(c);
        per[c] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    j["per_class_auc"] = per;
    j["warnings"] = r.warnings;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

template std::vector<PromptPair> build_prompt_pairs(const std::vector<std::string>&, const model::NovaModel<float>&);
template std::vector<PromptPair> build_prompt_pairs(const std::vector<std::string>&, const model::NovaModel<double>&);
template MatrixD embed_images(model::NovaModel<float>&, const std::vector<Image>&, int);
template MatrixD embed_images(model::NovaModel<double>&, const std::vector<Image>&, int);
template EvalReport evaluate(model::NovaModel<float>&, const std::vector<Image>&,
                             const std::vector<std::map<std::string, int>>&, const std::vector<std::string>&);
template EvalReport evaluate(model::NovaModel<double>&, const std::vector<Image>&,
                             const std::vector<std::map<std::string, int>>&, const std::vector<std::string>&);

}  // namespace nova::zeroshot
