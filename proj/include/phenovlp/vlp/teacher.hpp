#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "phenovlp/knowledge/text_encoder.hpp"

namespace phenovlp::vlp {

// Frozen text encoder whose caption embeddings the student is pulled toward.
class TeacherHandle {
public:
    virtual ~TeacherHandle() = default;
    // Unit-norm rows, one per caption, deterministic.
    virtual nn::Matrix encode(std::span<const std::string> captions) const = 0;
    virtual int dim() const = 0;
};

// Teacher backed by a trained knowledge encoder. Holds its own copy, so the
// source encoder and the teacher never share parameters.
class EncoderTeacher : public TeacherHandle {
public:
    explicit EncoderTeacher(const knowledge::TextEncoder& encoder) : encoder_(encoder.clone()) {}
    explicit EncoderTeacher(knowledge::TextEncoder&& encoder) : encoder_(std::move(encoder)) {}

    nn::Matrix encode(std::span<const std::string> captions) const override { return encoder_.encode(captions); }
    int dim() const override { return encoder_.dim(); }
    const knowledge::TextEncoder& encoder() const { return encoder_; }

private:
    knowledge::TextEncoder encoder_;
};

// Caption-hash -> embedding memo. Readers run concurrently; inserts take the
// exclusive lock and never overwrite an existing entry.
class TeacherCache {
public:
    static std::uint64_t key(std::string_view caption);

    bool lookup(std::string_view caption, Eigen::RowVectorXd& out) const;
    void insert(std::string_view caption, const Eigen::RowVectorXd& embedding);
    std::size_t size() const;

    // JSONL: {"key": "<hex>", "embedding": [...]}, sorted by key.
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::uint64_t, Eigen::RowVectorXd> entries_;
};

// Serves repeated captions from the cache and encodes only the misses.
class CachedTeacher : public TeacherHandle {
public:
    CachedTeacher(std::shared_ptr<const TeacherHandle> inner, std::shared_ptr<TeacherCache> cache);

    nn::Matrix encode(std::span<const std::string> captions) const override;
    int dim() const override { return inner_->dim(); }
    std::size_t misses() const { return misses_; }
    const TeacherCache& cache() const { return *cache_; }

private:
    std::shared_ptr<const TeacherHandle> inner_;
    std::shared_ptr<TeacherCache> cache_;
    mutable std::size_t misses_ = 0;
};

}  // namespace phenovlp::vlp
