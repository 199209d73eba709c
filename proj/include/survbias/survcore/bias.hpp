#pragma once

#include <optional>

namespace survbias {

/// Bias of hazard-ratio estimates on the log-hazard scale.
struct BiasReport {
    double true_log_hr = 0.0;
    double unadjusted_log_hr = 0.0;
    double method_log_hr = 0.0;
    /// 100 (ln true - ln unadjusted) / ln true; empty when the truth is HR 1.
    std::optional<double> percent_bias_unadjusted;
    /// 100 (1 - (ln true - ln method) / (ln true - ln unadjusted));
    /// empty when truth and unadjusted coincide.
    std::optional<double> percent_bias_eliminated;
};

/// Throws ConfigError for non-positive or non-finite hazard ratios.
BiasReport bias_metrics(double true_hr, double unadjusted_hr, double method_hr);

}  // namespace survbias
