#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pudetm {

/// Broad failure categories. The CLI maps these onto its exit-code contract
/// (data/config -> 2, numerical failures -> 3).
enum class ErrorKind {
    data,             // malformed or unusable input data
    config,           // invalid options, flags, or config files
    domain,           // argument outside a mathematical domain
    singular,         // linear system not solvable
    feasibility,      // empirical-likelihood feasible set empty or boundary hit
    non_convergence,  // iteration budget exhausted
    rank,             // rank condition violated
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(ErrorKind::domain, msg) {}
};

/// Carries the pivot index at which a factorization broke down.
struct SingularError : Error {
    SingularError(const std::string& msg, int pivot) : Error(ErrorKind::singular, msg), pivot_index(pivot) {}
    int pivot_index = -1;
};

struct FeasibilityError : Error {
    explicit FeasibilityError(const std::string& msg) : Error(ErrorKind::feasibility, msg) {}
};

/// Iteration budget exhausted; keeps the last iterate for diagnostics.
struct NonConvergenceError : Error {
    NonConvergenceError(const std::string& msg, std::vector<double> iterate = {})
        : Error(ErrorKind::non_convergence, msg), last_iterate(std::move(iterate)) {}
    std::vector<double> last_iterate;
};

struct RankError : Error {
    explicit RankError(const std::string& msg) : Error(ErrorKind::rank, msg) {}
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::data:
        case ErrorKind::config:
        case ErrorKind::domain:
            return 2;
        default:
            return 3;
    }
}

}  // namespace pudetm
