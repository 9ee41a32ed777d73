#pragma once

#include <stdexcept>

namespace afalab {

/// Bad configuration or usage; the CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing or corrupt data on disk, or a diverged run; exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace afalab
