#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "phenovlp/vision/image.hpp"

namespace phenovlp::corpus {

// The external model could not be reached or answered with an HTTP error.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caption refinement backend: prompt in, raw completion text out.
class TextRefiner {
public:
    virtual ~TextRefiner() = default;
    virtual std::string complete(const std::string& prompt) const = 0;
};

// Box-to-caption alignment backend: prompt plus box-overlaid figure in, raw
// completion text out.
class VisionAligner {
public:
    virtual ~VisionAligner() = default;
    virtual std::string align(const std::string& prompt, const vision::Image& overlay) const = 0;
};

// Offline refiner. Reads the main caption out of the refinement prompt and
// splits it at "Panel X:" markers; a caption without markers comes back
// under the "main" key. The modality is guessed from imaging words.
class MockRefiner : public TextRefiner {
public:
    std::string complete(const std::string& prompt) const override;
};

// Offline aligner. Reads the "(key) text" lines of the caption block out of
// the alignment prompt and maps box_i to the i-th line.
class MockAligner : public VisionAligner {
public:
    std::string align(const std::string& prompt, const vision::Image& overlay) const override;
};

struct HttpClientConfig {
    std::string url;  // http(s)://host[:port]/path
    std::string api_key;
    int timeout_seconds = 60;
    int retries = 2;

    // PHENOVLP_<prefix>_URL and PHENOVLP_<prefix>_API_KEY.
    static std::optional<HttpClientConfig> from_env(const std::string& prefix);
};

// POSTs {"prompt": ..., "image_b64": ...} as JSON and reads "text" from the
// JSON reply. Failed attempts are retried; the last failure raises
// TransportError.
class HttpModelClient : public TextRefiner, public VisionAligner {
public:
    explicit HttpModelClient(HttpClientConfig config);
    std::string complete(const std::string& prompt) const override;
    std::string align(const std::string& prompt, const vision::Image& overlay) const override;

private:
    std::string post(const std::string& body) const;
    HttpClientConfig config_;
    std::string base_;  // scheme://host[:port]
    std::string path_;
};

std::string base64_encode(const std::string& bytes);

}  // namespace phenovlp::corpus
