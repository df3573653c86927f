#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/nn/layers.hpp"

namespace phenovlp::knowledge {

struct TextEncoderConfig {
    int vocab_size = 4096;
    int model_dim = 32;
    int heads = 2;
    int layers = 2;
    int hidden_dim = 64;
    int embed_dim = 32;
    int max_tokens = 256;

    json to_json() const;
    static TextEncoderConfig from_json(const json& j);
    bool operator==(const TextEncoderConfig&) const = default;
};

// Lowercased word tokens hashed into a fixed vocabulary. Id 0 stands in for
// an empty text; real tokens map into [1, vocab_size).
class HashTokenizer {
public:
    HashTokenizer(int vocab_size, int max_tokens);

    // Truncated to max_tokens; never empty.
    std::vector<int> encode(std::string_view text) const;
    int max_tokens() const { return max_tokens_; }

private:
    int vocab_size_;
    int max_tokens_;
};

// Token + position embeddings, pre-norm transformer blocks, mean pooling over
// tokens, linear projection, L2 normalisation.
class TextEncoder {
public:
    TextEncoder(const TextEncoderConfig& config, std::uint64_t seed);

    TextEncoder(TextEncoder&&) noexcept = default;
    TextEncoder& operator=(TextEncoder&&) noexcept = default;
    TextEncoder(const TextEncoder&) = delete;
    TextEncoder& operator=(const TextEncoder&) = delete;

    // Independent deep copy.
    TextEncoder clone() const;

    // Differentiable n x embed_dim, unit-norm rows.
    nn::Var forward(std::span<const std::string> texts) const;

    // Pooled representation before projection (n x model_dim), differentiable.
    nn::Var pooled(std::span<const std::string> texts) const;

    // Inference: unit-norm rows, batched, order-preserving. Empty input gives 0 x d.
    nn::Matrix encode(std::span<const std::string> texts, std::size_t batch_size = 64) const;

    const TextEncoderConfig& config() const { return config_; }
    int dim() const { return config_.embed_dim; }
    const HashTokenizer& tokenizer() const { return tokenizer_; }

    nn::NamedParams parameters() const;

    // weights.bin + encoder.json inside `dir`.
    void save(const std::filesystem::path& dir) const;
    static TextEncoder load(const std::filesystem::path& dir);

private:
    nn::Var encode_one(const std::vector<int>& ids) const;

    TextEncoderConfig config_;
    HashTokenizer tokenizer_;
    nn::Var token_embedding_;
    nn::Var position_embedding_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm final_norm_;
    nn::Linear projection_;
};

}  // namespace phenovlp::knowledge
