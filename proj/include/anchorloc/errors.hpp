#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace anchorloc {

// Base of every error raised by the library. CLI exit codes are derived from
// the concrete type (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class DegenerateMap : public Error {
public:
    using Error::Error;
};

class DegenerateOrientation : public Error {
public:
    using Error::Error;
};

class DataIntegrity : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UndefinedRate : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TrainingDivergence : public Error {
public:
    TrainingDivergence(std::size_t epoch, std::size_t batch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch) + ": " + what),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

namespace exit_codes {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kData = 2;
inline constexpr int kDivergence = 3;
}  // namespace exit_codes

inline int exit_code(const Error& e) {
    if (dynamic_cast<const TrainingDivergence*>(&e) != nullptr) return exit_codes::kDivergence;
    return exit_codes::kData;
}

}  // namespace anchorloc
