#include "clmpt/encoder.hpp"

#include <cmath>

#include "clmpt/error.hpp"

namespace clmpt {

void EncoderConfig::validate() const {
    if (width <= 0 || layers <= 0 || heads <= 0 || ffn_hidden <= 0)
        throw Error::config("encoder sizes must be positive");
    if (width % heads != 0)
        throw Error::config("encoder width must be divisible by the head count");
    if (dropout < 0.0 || dropout >= 1.0)
        throw Error::config("dropout must lie in [0, 1)");
}

namespace {

Tensor normal_init(Rng& rng, std::vector<int64_t> shape, double std_dev) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = std_dev * rng.normal();
    return Tensor(std::move(shape), std::move(v));
}

// x * sigmoid(1.702 x): smooth gelu-style activation.
Tensor smooth_gelu(const Tensor& x) { return mul(x, sigmoid(scalar_mul(x, 1.702))); }

Tensor dropout_mask(const Tensor& x, double rate, Rng* rng) {
    if (!rng || rate <= 0.0) return x;
    std::vector<double> mask(x.values().size());
    const double keep = 1.0 - rate;
    for (double& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

} // namespace

TransformerEncoder TransformerEncoder::create(ParamStore& store, const std::string& prefix,
                                              const EncoderConfig& config, Rng& rng) {
    config.validate();
    const int64_t w = config.width;
    const int64_t h = config.ffn_hidden;
    for (int l = 0; l < config.layers; ++l) {
        const std::string base = prefix + ".block" + std::to_string(l) + ".";
        store.add(base + "wq", normal_init(rng, {w, w}, 0.02));
        store.add(base + "wk", normal_init(rng, {w, w}, 0.02));
        store.add(base + "wv", normal_init(rng, {w, w}, 0.02));
        store.add(base + "wo", normal_init(rng, {w, w}, 0.02));
        store.add(base + "ln1_gain", Tensor::full({w}, 1.0));
        store.add(base + "ln1_bias", Tensor::zeros({w}));
        store.add(base + "ln2_gain", Tensor::full({w}, 1.0));
        store.add(base + "ln2_bias", Tensor::zeros({w}));
        store.add(base + "ffn_w1", normal_init(rng, {w, h}, 0.02));
        store.add(base + "ffn_b1", Tensor::zeros({h}));
        store.add(base + "ffn_w2", normal_init(rng, {h, w}, 0.02));
        store.add(base + "ffn_b2", Tensor::zeros({w}));
    }
    return bind(store, prefix, config);
}

TransformerEncoder TransformerEncoder::bind(ParamStore& store, const std::string& prefix,
                                            const EncoderConfig& config) {
    config.validate();
    TransformerEncoder enc;
    enc.config_ = config;
    enc.prefix_ = prefix;
    for (int l = 0; l < config.layers; ++l) {
        const std::string base = prefix + ".block" + std::to_string(l) + ".";
        Block b;
        b.wq = store.get(base + "wq");
        b.wk = store.get(base + "wk");
        b.wv = store.get(base + "wv");
        b.wo = store.get(base + "wo");
        b.ln1_gain = store.get(base + "ln1_gain");
        b.ln1_bias = store.get(base + "ln1_bias");
        b.ln2_gain = store.get(base + "ln2_gain");
        b.ln2_bias = store.get(base + "ln2_bias");
        b.ffn_w1 = store.get(base + "ffn_w1");
        b.ffn_b1 = store.get(base + "ffn_b1");
        b.ffn_w2 = store.get(base + "ffn_w2");
        b.ffn_b2 = store.get(base + "ffn_b2");
        enc.blocks_.push_back(std::move(b));
    }
    return enc;
}

std::vector<std::string> TransformerEncoder::parameter_names() const {
    static const char* fields[] = {"wq", "wk", "wv", "wo", "ln1_gain", "ln1_bias",
                                   "ln2_gain", "ln2_bias", "ffn_w1", "ffn_b1",
                                   "ffn_w2", "ffn_b2"};
    std::vector<std::string> names;
    for (size_t l = 0; l < blocks_.size(); ++l)
        for (const char* f : fields)
            names.push_back(prefix_ + ".block" + std::to_string(l) + "." + f);
    return names;
}

Tensor TransformerEncoder::attention(const Block& b, const Tensor& x, Rng* dropout_rng) const {
    const int64_t dk = config_.width / config_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor q = matmul(x, b.wq);
    Tensor k = matmul(x, b.wk);
    Tensor v = matmul(x, b.wv);

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<size_t>(config_.heads));
    for (int h = 0; h < config_.heads; ++h) {
        Tensor qh = slice_cols(q, h * dk, dk);
        Tensor kh = slice_cols(k, h * dk, dk);
        Tensor vh = slice_cols(v, h * dk, dk);
        Tensor weights = softmax_lastdim(scalar_mul(matmul(qh, transpose(kh)), scale));
        head_outputs.push_back(matmul(weights, vh));
    }
    Tensor mixed = matmul(concat_cols(head_outputs), b.wo);
    return dropout_mask(mixed, config_.dropout, dropout_rng);
}

Tensor TransformerEncoder::run(const Tensor& x, Rng* dropout_rng) const {
    if (x.rank() != 2 || x.dim(1) != config_.width)
        throw Error::shape("encoder input must be (k, width)");
    Tensor state = x;
    for (const Block& b : blocks_) {
        Tensor normed1 = add_rowwise(mul_rowwise(layer_norm_lastdim(state), b.ln1_gain), b.ln1_bias);
        state = add(state, attention(b, normed1, dropout_rng));

        Tensor normed2 = add_rowwise(mul_rowwise(layer_norm_lastdim(state), b.ln2_gain), b.ln2_bias);
        Tensor hidden = smooth_gelu(add_rowwise(matmul(normed2, b.ffn_w1), b.ffn_b1));
        hidden = dropout_mask(hidden, config_.dropout, dropout_rng);
        state = add(state, add_rowwise(matmul(hidden, b.ffn_w2), b.ffn_b2));
    }
    return state;
}

} // namespace clmpt
