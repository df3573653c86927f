#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    // Stage progress logs drown the test report; PHENOVLP_TEST_LOG=info brings them back.
    const char* level = std::getenv("PHENOVLP_TEST_LOG");
    spdlog::set_level(spdlog::level::from_str(level ? level : "error"));
    doctest::Context context(argc, argv);
    return context.run();
}
