#pragma once

#include <stdexcept>
#include <string>

namespace phenovlp {

// Malformed input files, bad paths, unparsable records. CLI exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ontology graph violates DAG / reference / uniqueness constraints.
class StructuralError : public InputError {
public:
    using InputError::InputError;
};

class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Invalid hyperparameter or argument value.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Caller-side contract broken (e.g. non unit-norm rows handed to a loss).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A pipeline stage failed to produce its outputs. CLI exit code 2.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// Something that must hold by construction did not. CLI exit code 3.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace phenovlp
