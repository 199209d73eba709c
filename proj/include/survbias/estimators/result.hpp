#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace survbias {

enum class Estimand { ATC, ATT, ATE };

enum class Method {
    Truth,
    Unadjusted,
    WaitLinear,
    WaitQuadratic,
    WaitRcs,
    Matching,
    EarlyTreated,
    MedianControl,
    LeftTruncation,
    TimeVarying,
};

std::string_view to_string(Estimand e) noexcept;
std::string_view to_string(Method m) noexcept;
/// Inverse of to_string; throws DataError for unknown labels.
Estimand parse_estimand(std::string_view s);
Method parse_method(std::string_view s);

/// The estimand each method targets. Truth has no fixed estimand.
std::optional<Estimand> estimand_of(Method m) noexcept;

/// Human-readable row label used in rendered tables.
std::string_view describe(Method m) noexcept;

struct EstimatorResult {
    Method method = Method::Unadjusted;
    Estimand estimand = Estimand::ATE;
    double hr = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double se_log_hr = 0.0;
    std::size_t n_subjects = 0;
    std::size_t n_events = 0;
    bool robust_se_used = false;
    std::vector<std::string> warnings;
};

}  // namespace survbias
