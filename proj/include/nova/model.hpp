#pragma once

#include "nova/image.hpp"
#include "nova/layers.hpp"
#include "nova/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace nova::model {

enum class Mode { train, eval };

struct ViTConfig {
    int patch_size = 16;
    int depth = 2;
    int heads = 2;
    int width = 64;
    int mlp_ratio = 4;
    int image_size = 224;  // resolution of the learned positional grid
    int channels = 3;

    static ViTConfig preset(std::string_view name);  // tiny, small, base
    void validate() const;
    int grid() const { return image_size / patch_size; }
};

struct PredictorConfig {
    int layers = 3;
    int hidden = 2048;
    int out_dim = 64;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    void validate() const;
};

/// Bicubic (a = -0.75, half-pixel centers, clamped borders) resampling of a
/// square positional grid with `source_tokens` entries to `target_tokens`
/// entries, as a target x source matrix.
MatrixD bicubic_resample_matrix(Eigen::Index source_tokens, Eigen::Index target_tokens);

/// Resizes a (g*g) x C positional grid to target_tokens rows. Exact copy when
/// the sizes match; std::invalid_argument when either count is not a square.
template <typename T>
Matrix<T> interpolate_pos_embed(const Matrix<T>& pos, Eigen::Index target_tokens);

/// Per-view images of one resolution packed for the encoder.
template <typename T>
struct ImageBatch {
    int count = 0;
    int channels = 0;
    int size = 0;
    std::vector<T> data;  // count x channels x size x size

    static ImageBatch from_images(const std::vector<const Image*>& images);
};

template <typename T>
struct BlockCache {
    layers::LayerNormCache<T> ln1, ln2;
    layers::AttentionCache<T> attn;
    Matrix<T> mid;     // residual stream after attention
    Matrix<T> normed;  // ln2 output
    Matrix<T> hidden;  // fc1 output, before GELU
    Matrix<T> act;     // GELU output
};

template <typename T>
struct ViTCache {
    Eigen::Index tokens = 0;
    int count = 0;
    Matrix<T> patches;
    std::vector<BlockCache<T>> blocks;
    layers::LayerNormCache<T> final_ln;
};

template <typename T>
class VisionTransformer {
public:
    VisionTransformer() = default;
    VisionTransformer(const ViTConfig& cfg, std::uint64_t seed);

    /// Mean-pooled patch-token embeddings, one row per image. Images of any
    /// size divisible by the patch size are accepted.
    Matrix<T> forward(const ImageBatch<T>& images, ViTCache<T>& cache) const;
    void backward(const Matrix<T>& grad_pooled, const ViTCache<T>& cache);

    void collect(std::vector<Parameter<T>*>& out);
    const ViTConfig& config() const { return cfg_; }

private:
    struct Block {
        layers::LayerNorm<T> ln1, ln2;
        layers::MultiHeadAttention<T> attn;
        layers::Linear<T> fc1, fc2;
    };

    ViTConfig cfg_;
    layers::Linear<T> patch_embed_;
    Parameter<T> pos_embed_;
    std::vector<Block> blocks_;
    layers::LayerNorm<T> final_ln_;
};

template <typename T>
struct PredictorCache {
    std::vector<Matrix<T>> inputs;  // input of each linear layer
    std::vector<layers::BatchNormCache<T>> bn;
    std::vector<Matrix<T>> normed;  // batch-norm outputs, before ReLU
};

/// MLP into the shared space: (Linear, BatchNorm, ReLU) x (layers - 1), Linear.
template <typename T>
class Predictor {
public:
    Predictor() = default;
    Predictor(int in_dim, const PredictorConfig& cfg, std::uint64_t seed);

    /// std::invalid_argument for a train-mode batch of one row.
    Matrix<T> forward(const Matrix<T>& x, Mode mode, PredictorCache<T>& cache);
    Matrix<T> backward(const Matrix<T>& grad_out, const PredictorCache<T>& cache);

    void collect(std::vector<Parameter<T>*>& out);
    void collect_buffers(std::vector<std::pair<std::string, Matrix<T>*>>& out);
    const PredictorConfig& config() const { return cfg_; }

private:
    PredictorConfig cfg_;
    std::vector<layers::Linear<T>> linears_;
    std::vector<layers::BatchNorm<T>> norms_;
};

/// Lowercase, split on whitespace and punctuation.
std::vector<std::string> tokenize(std::string_view text);

/// Frozen token embeddings. Each vector is a deterministic function of the
/// table seed and the token, so tables built over overlapping vocabularies
/// agree on shared tokens. Unknown tokens are skipped when pooling; a text
/// with no known token maps to a dedicated unknown vector.
class TextAnchorTable {
public:
    TextAnchorTable() = default;
    TextAnchorTable(const std::vector<std::string>& vocabulary, int dim, std::uint64_t seed);
    /// Rebuilds a table from stored rows (last row is the unknown vector).
    TextAnchorTable(std::map<std::string, int> index, MatrixD table);

    int dim() const { return static_cast<int>(table_.cols()); }
    const std::map<std::string, int>& index() const { return index_; }
    const MatrixD& table() const { return table_; }
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    /// Mean of the known token vectors of each text.
    MatrixD pool(const std::vector<std::string>& texts) const;

private:
    std::map<std::string, int> index_;
    MatrixD table_;  // (vocab + 1) x dim
};

/// Vocabulary covering the given texts plus the zero-shot prompt words.
std::vector<std::string> build_vocabulary(const std::vector<std::string>& texts,
                                          const std::vector<std::string>& class_names);

template <typename T>
struct NovaModel {
    NovaModel(const ViTConfig& vit_cfg, const PredictorConfig& pred_cfg, TextAnchorTable table,
              std::uint64_t seed);

    /// Frozen text-table mean followed by the learnable projection.
    Matrix<T> encode_text(const std::vector<std::string>& texts) const;
    Matrix<T> encode_text(const std::vector<std::string>& texts, Matrix<T>& pooled) const;
    /// Accumulates into the projection head only.
    void backward_text(const Matrix<T>& pooled, const Matrix<T>& grad_anchor);

    /// All tensors in a fixed order, frozen table included.
    std::vector<Parameter<T>*> parameters();
    /// Non-learned state (batch-norm running statistics).
    std::vector<std::pair<std::string, Matrix<T>*>> buffers();
    void zero_grad();
    std::size_t parameter_count(bool trainable_only = true);

    VisionTransformer<T> vit;
    Predictor<T> predictor;
    TextAnchorTable table;
    Parameter<T> text_table;  // frozen copy of the table, checkpointed
    layers::Linear<T> head;
    Parameter<T> log_tau;     // contrastive temperature, log scale
    Parameter<T> logit_bias;  // sigmoid-loss bias
};

}  // namespace nova::model
