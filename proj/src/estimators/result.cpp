#include "survbias/estimators/result.hpp"

#include <array>
#include <string>
#include <utility>

#include "survbias/error.hpp"

namespace survbias {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 10> kMethodNames{{
    {Method::Truth, "truth"},
    {Method::Unadjusted, "unadjusted"},
    {Method::WaitLinear, "wait_linear"},
    {Method::WaitQuadratic, "wait_quadratic"},
    {Method::WaitRcs, "wait_rcs"},
    {Method::Matching, "matching"},
    {Method::EarlyTreated, "early_treated"},
    {Method::MedianControl, "median_control"},
    {Method::LeftTruncation, "left_truncation"},
    {Method::TimeVarying, "time_varying"},
}};

}  // namespace

std::string_view to_string(Estimand e) noexcept {
    switch (e) {
        case Estimand::ATC: return "ATC";
        case Estimand::ATT: return "ATT";
        case Estimand::ATE: return "ATE";
    }
    return "ATE";
}

std::string_view to_string(Method m) noexcept {
    for (const auto& [k, v] : kMethodNames) {
        if (k == m) return v;
    }
    return "unknown";
}

Estimand parse_estimand(std::string_view s) {
    if (s == "ATC") return Estimand::ATC;
    if (s == "ATT") return Estimand::ATT;
    if (s == "ATE") return Estimand::ATE;
    throw DataError("unknown estimand '" + std::string(s) + "'");
}

Method parse_method(std::string_view s) {
    for (const auto& [k, v] : kMethodNames) {
        if (v == s) return k;
    }
    throw DataError("unknown method '" + std::string(s) + "'");
}

std::optional<Estimand> estimand_of(Method m) noexcept {
    switch (m) {
        case Method::Truth: return std::nullopt;
        case Method::EarlyTreated: return Estimand::ATC;
        case Method::MedianControl: return Estimand::ATT;
        default: return Estimand::ATE;
    }
}

std::string_view describe(Method m) noexcept {
    switch (m) {
        case Method::Truth: return "True";
        case Method::Unadjusted: return "Unadjusted";
        case Method::WaitLinear: return "Wait time as a linear covariate";
        case Method::WaitQuadratic: return "Wait time as a quadratic covariate";
        case Method::WaitRcs: return "Wait time as restricted cubic splines";
        case Method::Matching: return "Landmark matching";
        case Method::EarlyTreated: return "Treated with early start only";
        case Method::MedianControl: return "Controls from median wait";
        case Method::LeftTruncation: return "Left truncation";
        case Method::TimeVarying: return "Time-varying treatment";
    }
    return "";
}

}  // namespace survbias
