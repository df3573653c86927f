#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phenovlp/knowledge/text_encoder.hpp"
#include "phenovlp/vision/encoder.hpp"

namespace phenovlp::vlp {

// Dual encoder. `kd_projection` maps student caption embeddings into the
// teacher's space when the two dimensions differ.
struct VLModel {
    vision::VisionEncoder vision;
    knowledge::TextEncoder text;
    std::optional<nn::Linear> kd_projection;

    int dim() const { return vision.dim(); }

    nn::NamedParams parameters() const;
    // Unit-norm student embeddings in teacher space (differentiable).
    nn::Var project_for_teacher(const nn::Var& t) const;

    nn::Matrix encode_images(const nn::Matrix& images) const { return vision.encode(images); }
    nn::Matrix encode_texts(std::span<const std::string> texts) const { return text.encode(texts); }

    VLModel clone() const;

    // vision.json, vision_weights.bin, encoder.json, weights.bin, model.json
    // and kd_projection.bin when present.
    void save(const std::filesystem::path& dir) const;
    static VLModel load(const std::filesystem::path& dir);
};

enum class TextInit { scratch, pretrained };
TextInit text_init_from_string(std::string_view s);
std::string_view to_string(TextInit init);

struct VLModelSpec {
    vision::VisionEncoderConfig vision;
    knowledge::TextEncoderConfig text;
    TextInit init = TextInit::pretrained;
    std::uint64_t seed = 0;
};

// `pretrained` copies every weight of `init_from` (the knowledge encoder) into
// the student text encoder, so their configs must match. `teacher_dim`, when
// set and different from the embedding dim, adds the KD projection.
VLModel make_vl_model(const VLModelSpec& spec, const knowledge::TextEncoder* init_from,
                      std::optional<int> teacher_dim);

}  // namespace phenovlp::vlp
