#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "phenovlp/corpus/records.hpp"
#include "phenovlp/vision/image.hpp"
#include "phenovlp/vlp/model.hpp"
#include "phenovlp/vlp/teacher.hpp"

namespace phenovlp::vlp {

struct VLPTrainConfig {
    int batch_size = 256;
    double alpha = 0.3;
    double tau_m = 0.07;   // image-caption temperature
    double tau_kd = 0.07;  // distillation temperature
    double learning_rate = 1e-5;
    double weight_decay = 0.01;
    long warmup_steps = 500;
    int epochs = 10;
    std::uint64_t seed = 0;
    int image_size = 224;
    int max_tokens = 256;
    bool kd_enabled = true;
    bool learnable_temperature = false;
    long max_steps = -1;
    bool fail_fast = false;  // missing image aborts instead of skipping the pair
    std::filesystem::path checkpoint_dir;   // per-epoch and final checkpoints
    std::filesystem::path diagnostics_dir;  // NaN batch dumps

    void validate() const;
    json to_json() const;
};

struct VLPExample {
    std::string pair_id;
    Eigen::RowVectorXd image;  // preprocessed
    std::string caption;
    std::vector<std::string> phenotype_ids;
};

struct VLPDataset {
    std::vector<VLPExample> examples;
    std::size_t skipped_missing = 0;

    nn::Matrix images() const;
    std::vector<std::string> captions() const;
};

// Image refs resolve against `base_dir`. Unreadable images are skipped and
// counted unless `fail_fast`, which throws InputError.
VLPDataset load_vlp_dataset(const std::vector<corpus::ImageCaptionPair>& pairs, const std::filesystem::path& base_dir,
                            int image_size, bool fail_fast = false, const vision::Normalization& norm = {});

struct ImageEncodings {
    nn::Matrix embeddings;            // failed rows are zero
    std::vector<std::string> errors;  // empty string where the image encoded fine
};

// Per-item errors instead of failing the whole batch.
ImageEncodings encode_image_files(const VLModel& model, const std::vector<std::filesystem::path>& paths,
                                  const vision::Normalization& norm = {});

struct StepRecord {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double contrastive = 0.0;
    double distillation = 0.0;  // 0 when distillation is off
};

using VLPStepHook = std::function<void(const StepRecord&, const std::vector<std::size_t>& batch)>;

struct VLPTrainResult {
    VLModel model;
    std::vector<StepRecord> history;
    long total_steps = 0;
};

long vlp_steps_per_epoch(std::size_t examples, int batch_size);
long vlp_total_steps(const VLPTrainConfig& config, std::size_t examples);

// Seeded shuffled mini-batches; per step V, T (and K from the teacher when
// distillation is on) feed L_M + alpha * L_KD under the warmup-cosine schedule.
// The teacher is only read.
VLPTrainResult train_vlp(const VLPTrainConfig& config, const VLPDataset& data, VLModel model,
                         const TeacherHandle* teacher, const VLPStepHook& hook = {});

void write_loss_history(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace phenovlp::vlp
