#pragma once
// Pre-layer-norm transformer encoder over an unordered set of vectors.
// No positional encoding anywhere; inputs are treated as a set.

#include <string>

#include "clmpt/optim.hpp"
#include "clmpt/rng.hpp"
#include "clmpt/tensor_ops.hpp"

namespace clmpt {

struct EncoderConfig {
    int64_t width = 64;       // model width (2 * predictor rank)
    int layers = 2;
    int heads = 4;
    int64_t ffn_hidden = 256;
    double dropout = 0.0;     // applied to attention output and FFN hidden

    void validate() const;
};

// Parameter handles alias tensors registered in a ParamStore, so optimizer
// updates are visible here without copying.
class TransformerEncoder {
public:
    // Registers freshly initialized parameters under `prefix.` names.
    static TransformerEncoder create(ParamStore& store, const std::string& prefix,
                                     const EncoderConfig& config, Rng& rng);
    // Binds to parameters already present (e.g. after checkpoint load).
    static TransformerEncoder bind(ParamStore& store, const std::string& prefix,
                                   const EncoderConfig& config);

    // (k, width) -> (k, width). `dropout_rng` enables dropout (training
    // mode); pass nullptr for inference.
    Tensor run(const Tensor& x, Rng* dropout_rng = nullptr) const;

    const EncoderConfig& config() const { return config_; }
    std::vector<std::string> parameter_names() const;

private:
    struct Block {
        Tensor wq, wk, wv, wo;
        Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
        Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    EncoderConfig config_;
    std::string prefix_;
    std::vector<Block> blocks_;

    Tensor attention(const Block& b, const Tensor& x, Rng* dropout_rng) const;
};

} // namespace clmpt
