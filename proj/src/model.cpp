#include "nova/model.hpp"


#include "nova/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

namespace nova::model {

ViTConfig ViTConfig::preset(std::string_view name) {
    ViTConfig c;
    if (name == "tiny") {
        c.width = 64, c.depth = 2, c.heads = 2;
    } else if (name == "small") {
        c.width = 384, c.depth = 12, c.heads = 6;
    } else if (name == "base") {
        c.width = 768, c.depth = 12, c.heads = 12;
    } else {
        throw std::invalid_argument("unknown ViT preset: " + std::string(name));
    }
    return c;
}

void ViTConfig::validate() const {
    if (patch_size < 1 || depth < 0 || heads < 1 || width < 1 || mlp_ratio < 1 || channels < 1)
        throw std::invalid_argument("ViTConfig: sizes must be positive");
    if (width % heads != 0) throw std::invalid_argument("ViTConfig: width must be divisible by heads");
    if (image_size % patch_size != 0)
        throw std::invalid_argument("ViTConfig: image_size must be divisible by patch_size");
}

void PredictorConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("PredictorConfig: layers must be >= 1");
    if (out_dim < 1 || hidden < 1) throw std::invalid_argument("PredictorConfig: dimensions must be >= 1");
}

namespace {

Eigen::Index square_side(Eigen::Index tokens) {
    const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(tokens))));
    if (tokens < 1 || side * side != tokens)
        throw std::invalid_argument("positional grid: token count " + std::to_string(tokens) + " is not a perfect square");
    return side;
}

double cubic(double x) {
    constexpr double a = -0.75;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

Eigen::MatrixXd bicubic_1d(Eigen::Index in, Eigen::Index out) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out, in);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (Eigen::Index o = 0; o < out; ++o) {
        const double src = (o + 0.5) * scale - 0.5;
        const auto i0 = static_cast<Eigen::Index>(std::floor(src));
        const double t = src - static_cast<double>(i0);
        for (int k = -1; k <= 2; ++k) {
            const Eigen::Index idx = std::clamp<Eigen::Index>(i0 + k, 0, in - 1);
            m(o, idx) += cubic(t - k);
        }
    }
    return m;
}

}  // namespace

MatrixD bicubic_resample_matrix(Eigen::Index source_tokens, Eigen::Index target_tokens) {
    const Eigen::Index gs = square_side(source_tokens);
    const Eigen::Index gt = square_side(target_tokens);
    const Eigen::MatrixXd axis = bicubic_1d(gs, gt);
    MatrixD m(target_tokens, source_tokens);
    for (Eigen::Index oy = 0; oy < gt; ++oy)
        for (Eigen::Index ox = 0; ox < gt; ++ox)
            for (Eigen::Index iy = 0; iy < gs; ++iy)
                for (Eigen::Index ix = 0; ix < gs; ++ix)
                    m(oy * gt + ox, iy * gs + ix) = axis(oy, iy) * axis(ox, ix);
    return m;
}

template <typename T>
Matrix<T> interpolate_pos_embed(const Matrix<T>& pos, Eigen::Index target_tokens) {
    square_side(pos.rows());
    square_side(target_tokens);
    if (target_tokens == pos.rows()) return pos;
    const Matrix<T> m = bicubic_resample_matrix(pos.rows(), target_tokens).template cast<T>();
    return m * pos;
}

template <typename T>
ImageBatch<T> ImageBatch<T>::from_images(const std::vector<const Image*>& images) {
    ImageBatch<T> b;
    if (images.empty()) return b;
    b.count = static_cast<int>(images.size());
    b.channels = images.front()->channels;
    b.size = images.front()->height;
    const std::size_t per = static_cast<std::size_t>(b.channels) * b.size * b.size;
    b.data.resize(per * images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = *images[i];
        if (img.channels != b.channels || img.height != b.size || img.width != b.size)
            throw std::invalid_argument("ImageBatch: images must share one square shape");
        std::transform(img.data.begin(), img.data.end(), b.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                       [](float v) { return static_cast<T>(v); });
    }
    return b;
}

// ---------------------------------------------------------------------------
// Vision transformer

template <typename T>
VisionTransformer<T>::VisionTransformer(const ViTConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int C = cfg.width;
    const int in = cfg.channels * cfg.patch_size * cfg.patch_size;
    patch_embed_ = layers::Linear<T>("vit.patch_embed", in, C, seed);
    pos_embed_ = Parameter<T>("vit.pos_embed", static_cast<Eigen::Index>(cfg.grid()) * cfg.grid(), C);
    layers::init_truncated_normal(pos_embed_, seed);
    for (int d = 0; d < cfg.depth; ++d) {
        const std::string p = "vit.block" + std::to_string(d);
        Block b;
        b.ln1 = layers::LayerNorm<T>(p + ".ln1", C);
        b.attn = layers::MultiHeadAttention<T>(p + ".attn", C, cfg.heads, seed);
        b.ln2 = layers::LayerNorm<T>(p + ".ln2", C);
        b.fc1 = layers::Linear<T>(p + ".fc1", C, C * cfg.mlp_ratio, seed);
        b.fc2 = layers::Linear<T>(p + ".fc2", C * cfg.mlp_ratio, C, seed);
        blocks_.push_back(std::move(b));
    }
    // No shift: the predictor's batch normalization absorbs it.
    final_ln_ = layers::LayerNorm<T>("vit.norm", C, false);
}

template <typename T>
Matrix<T> VisionTransformer<T>::forward(const ImageBatch<T>& images, ViTCache<T>& cache) const {
    const int p = cfg_.patch_size;
    if (images.channels != cfg_.channels) throw std::invalid_argument("encode_image: channel count mismatch");
    if (images.size % p != 0)
        throw std::invalid_argument("encode_image: view size " + std::to_string(images.size) +
                                    " not divisible by patch size " + std::to_string(p));
    const int S = images.size;
    const int G = S / p;
    const Eigen::Index L = static_cast<Eigen::Index>(G) * G;
    const int N = images.count;
    const int Cin = images.channels;
    cache.tokens = L;
    cache.count = N;

    cache.patches.resize(N * L, static_cast<Eigen::Index>(Cin) * p * p);
    for (int n = 0; n < N; ++n)
        for (int py = 0; py < G; ++py)
            for (int px = 0; px < G; ++px) {
                T* row = cache.patches.row(n * L + py * G + px).data();
                for (int c = 0; c < Cin; ++c)
                    for (int ky = 0; ky < p; ++ky) {
                        const T* src = images.data.data() +
                                       ((static_cast<std::size_t>(n) * Cin + c) * S + py * p + ky) * S + px * p;
                        std::copy(src, src + p, row + (c * p + ky) * p);
                    }
            }

    Matrix<T> x = patch_embed_.forward(cache.patches);
    const Matrix<T> pos = interpolate_pos_embed(pos_embed_.value, L);
    for (int n = 0; n < N; ++n) x.middleRows(n * L, L) += pos;

    cache.blocks.resize(blocks_.size());
    for (std::size_t d = 0; d < blocks_.size(); ++d) {
        const Block& b = blocks_[d];
        BlockCache<T>& c = cache.blocks[d];
        const Matrix<T> a = b.ln1.forward(x, c.ln1);
        c.mid = x + b.attn.forward(a, L, c.attn);
        c.normed = b.ln2.forward(c.mid, c.ln2);
        c.hidden = b.fc1.forward(c.normed);
        c.act = layers::gelu(c.hidden);
        x = c.mid + b.fc2.forward(c.act);
    }
    const Matrix<T> y = final_ln_.forward(x, cache.final_ln);
    Matrix<T> pooled(N, cfg_.width);
    for (int n = 0; n < N; ++n) pooled.row(n) = y.middleRows(n * L, L).colwise().mean();
    return pooled;
}

template <typename T>
void VisionTransformer<T>::backward(const Matrix<T>& grad_pooled, const ViTCache<T>& cache) {
    const Eigen::Index L = cache.tokens;
    const int N = cache.count;
    Matrix<T> dy(N * L, cfg_.width);
    const T inv_l = T(1) / static_cast<T>(L);
    for (int n = 0; n < N; ++n) dy.middleRows(n * L, L).rowwise() = grad_pooled.row(n) * inv_l;
    Matrix<T> dx = final_ln_.backward(dy, cache.final_ln);

    for (std::size_t d = blocks_.size(); d-- > 0;) {
        Block& b = blocks_[d];
        const BlockCache<T>& c = cache.blocks[d];
        const Matrix<T> dact = b.fc2.backward(c.act, dx);
        const Matrix<T> dnormed = b.fc1.backward(c.normed, layers::gelu_backward(c.hidden, dact));
        Matrix<T> dmid = dx + b.ln2.backward(dnormed, c.ln2);
        dx = dmid + b.ln1.backward(b.attn.backward(dmid, L, c.attn), c.ln1);
    }

    Matrix<T> dpos = Matrix<T>::Zero(L, cfg_.width);
    for (int n = 0; n < N; ++n) dpos += dx.middleRows(n * L, L);
    if (L == pos_embed_.value.rows()) {
        pos_embed_.grad += dpos;
    } else {
        const Matrix<T> m = bicubic_resample_matrix(pos_embed_.value.rows(), L).template cast<T>();
        pos_embed_.grad.noalias() += m.transpose() * dpos;
    }
    patch_embed_.backward(cache.patches, dx, false);
}

template <typename T>
void VisionTransformer<T>::collect(std::vector<Parameter<T>*>& out) {
    patch_embed_.collect(out);
    out.push_back(&pos_embed_);
    for (Block& b : blocks_) {
        b.ln1.collect(out);
        b.attn.collect(out);
        b.ln2.collect(out);
        b.fc1.collect(out);
        b.fc2.collect(out);
    }
    final_ln_.collect(out);
}

// ---------------------------------------------------------------------------
// Predictor

template <typename T>
Predictor<T>::Predictor(int in_dim, const PredictorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    int in = in_dim;
    for (int i = 0; i < cfg.layers; ++i) {
        const bool last = i == cfg.layers - 1;
        const int out = last ? cfg.out_dim : cfg.hidden;
        const std::string name = "predictor.fc" + std::to_string(i);
        linears_.emplace_back(name, in, out, seed, last);  // batch norm supplies the shift
        if (!last) norms_.emplace_back("predictor.bn" + std::to_string(i), out, cfg.bn_momentum, cfg.bn_eps);
        in = out;
    }
}

template <typename T>
Matrix<T> Predictor<T>::forward(const Matrix<T>& x_in, Mode mode, PredictorCache<T>& cache) {
    const bool train = mode == Mode::train;
    if (train && x_in.rows() < 2 && !norms_.empty())
        throw std::invalid_argument("predict: train-mode batch statistics need at least 2 rows");
    cache.inputs.assign(linears_.size(), {});
    cache.bn.assign(norms_.size(), {});
    cache.normed.assign(norms_.size(), {});
    Matrix<T> x = x_in;
    for (std::size_t i = 0; i < norms_.size(); ++i) {
        cache.inputs[i] = std::move(x);
        cache.normed[i] = norms_[i].forward(linears_[i].forward(cache.inputs[i]), cache.bn[i], train);
        x = cache.normed[i].cwiseMax(T(0));
    }
    cache.inputs.back() = std::move(x);
    return linears_.back().forward(cache.inputs.back());
}

template <typename T>
Matrix<T> Predictor<T>::backward(const Matrix<T>& grad_out, const PredictorCache<T>& cache) {
    Matrix<T> d = linears_.back().backward(cache.inputs.back(), grad_out);
    for (std::size_t i = norms_.size(); i-- > 0;) {
        d = (cache.normed[i].array() > T(0)).select(d, T(0));
        d = norms_[i].backward(d, cache.bn[i]);
        d = linears_[i].backward(cache.inputs[i], d);
    }
    return d;
}

template <typename T>
void Predictor<T>::collect(std::vector<Parameter<T>*>& out) {
    for (std::size_t i = 0; i < linears_.size(); ++i) {
        linears_[i].collect(out);
        if (i < norms_.size()) norms_[i].collect(out);
    }
}

template <typename T>
void Predictor<T>::collect_buffers(std::vector<std::pair<std::string, Matrix<T>*>>& out) {
    for (auto& bn : norms_) {
        out.emplace_back(bn.name + ".running_mean", &bn.running_mean);
        out.emplace_back(bn.name + ".running_var", &bn.running_var);
    }
}

// ---------------------------------------------------------------------------
// Text side

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || std::ispunct(c)) {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

namespace {
constexpr std::string_view kUnknownToken = "\x01<unk>";

void fill_token_vector(MatrixD& table, Eigen::Index row, std::string_view token, std::uint64_t seed) {
    Rng gen(derive_seed(seed, fnv1a64(token)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < table.cols(); ++j) table(row, j) = normal(gen);
}
}  // namespace

TextAnchorTable::TextAnchorTable(const std::vector<std::string>& vocabulary, int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("TextAnchorTable: dim must be >= 1");
    std::set<std::string> unique;
    for (const auto& w : vocabulary)
        for (auto& t : tokenize(w)) unique.insert(std::move(t));
    table_.resize(static_cast<Eigen::Index>(unique.size()) + 1, dim);
    int row = 0;
    for (const auto& t : unique) {
        index_[t] = row;
        fill_token_vector(table_, row++, t, seed);
    }
    fill_token_vector(table_, row, kUnknownToken, seed);
}

TextAnchorTable::TextAnchorTable(std::map<std::string, int> index, MatrixD table)
    : index_(std::move(index)), table_(std::move(table)) {
    for (const auto& [tok, row] : index_)
        if (row < 0 || row >= table_.rows() - 1)
            throw std::invalid_argument("TextAnchorTable: token row out of range: " + tok);
}

MatrixD TextAnchorTable::pool(const std::vector<std::string>& texts) const {
    MatrixD out(static_cast<Eigen::Index>(texts.size()), table_.cols());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        RowVector<double> acc = RowVector<double>::Zero(table_.cols());
        int known = 0;
        for (const auto& tok : tokenize(texts[i])) {
            auto it = index_.find(tok);
            if (it == index_.end()) continue;
            acc += table_.row(it->second);
            ++known;
        }
        out.row(static_cast<Eigen::Index>(i)) = known > 0 ? RowVector<double>(acc / known)
                                                          : RowVector<double>(table_.row(table_.rows() - 1));
    }
    return out;
}

std::vector<std::string> build_vocabulary(const std::vector<std::string>& texts,
                                          const std::vector<std::string>& class_names) {
    std::set<std::string> words{"no"};
    for (const auto& t : texts)
        for (auto& w : tokenize(t)) words.insert(std::move(w));
    for (const auto& c : class_names)
        for (auto& w : tokenize(c)) words.insert(std::move(w));
    return {words.begin(), words.end()};
}

// ---------------------------------------------------------------------------
// Full model

template <typename T>
NovaModel<T>::NovaModel(const ViTConfig& vit_cfg, const PredictorConfig& pred_cfg, TextAnchorTable tbl,
                        std::uint64_t seed)
    : vit(vit_cfg, seed),
      predictor(vit_cfg.width, pred_cfg, seed),
      text_table("text.table", tbl.table().rows(), tbl.table().cols(), false),
      head("text.head", tbl.dim(), pred_cfg.out_dim, seed),
      log_tau("loss.log_tau", 1, 1),
      logit_bias("loss.bias", 1, 1) {
    // Round the table through T so a stored model reproduces it exactly.
    text_table.value = tbl.table().template cast<T>();
    table = TextAnchorTable(tbl.index(), text_table.value.template cast<double>());
}

template <typename T>
Matrix<T> NovaModel<T>::encode_text(const std::vector<std::string>& texts) const {
    Matrix<T> pooled;
    return encode_text(texts, pooled);
}

template <typename T>
Matrix<T> NovaModel<T>::encode_text(const std::vector<std::string>& texts, Matrix<T>& pooled) const {
    pooled = table.pool(texts).template cast<T>();
    return head.forward(pooled);
}

template <typename T>
void NovaModel<T>::backward_text(const Matrix<T>& pooled, const Matrix<T>& grad_anchor) {
    head.backward(pooled, grad_anchor, false);
}

template <typename T>
std::vector<Parameter<T>*> NovaModel<T>::parameters() {
    std::vector<Parameter<T>*> out;
    vit.collect(out);
    predictor.collect(out);
    head.collect(out);
    out.push_back(&log_tau);
    out.push_back(&logit_bias);
    out.push_back(&text_table);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> NovaModel<T>::buffers() {
    std::vector<std::pair<std::string, Matrix<T>*>> out;
    predictor.collect_buffers(out);
    return out;
}

template <typename T>
void NovaModel<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t NovaModel<T>::parameter_count(bool trainable_only) {
    std::size_t n = 0;
    for (auto* p : parameters())
        if (!trainable_only || p->trainable) n += static_cast<std::size_t>(p->size());
    return n;
}

template Matrix<float> interpolate_pos_embed(const Matrix<float>&, Eigen::Index);
template Matrix<double> interpolate_pos_embed(const Matrix<double>&, Eigen::Index);
template struct ImageBatch<float>;
template struct ImageBatch<double>;
template class VisionTransformer<float>;
template class VisionTransformer<double>;
template class Predictor<float>;
template class Predictor<double>;
template struct NovaModel<float>;
template struct NovaModel<double>;

}  // namespace nova::model
