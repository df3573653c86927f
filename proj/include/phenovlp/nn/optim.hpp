#pragma once

#include <filesystem>
#include <vector>

#include "phenovlp/nn/layers.hpp"

namespace phenovlp::nn {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Decay applies to matrices only; vectors
// (biases, norm gains) are left alone.
class AdamW {
public:
    AdamW(NamedParams params, AdamWOptions options = {});

    void step(double lr);
    void zero_grad();
    long steps() const { return t_; }

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    NamedParams params_;
    AdamWOptions opt_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

// Binary tensor file: magic, count, then (name, rows, cols, doubles) records.
void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, Matrix>>& tensors);
std::vector<std::pair<std::string, Matrix>> load_tensors(const std::filesystem::path& path);

void save_params(const std::filesystem::path& path, const NamedParams& params);
// Every stored tensor must exist in `params` with the same shape and vice versa.
void load_params(const std::filesystem::path& path, NamedParams& params);

}  // namespace phenovlp::nn
