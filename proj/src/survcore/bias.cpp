#include "survbias/survcore/bias.hpp"

#include <cmath>

#include "survbias/error.hpp"

namespace survbias {

BiasReport bias_metrics(double true_hr, double unadjusted_hr, double method_hr) {
    for (double hr : {true_hr, unadjusted_hr, method_hr}) {
        if (!(hr > 0.0) || !std::isfinite(hr)) throw ConfigError("bias metrics need positive, finite hazard ratios");
    }
    BiasReport r;
    r.true_log_hr = std::log(true_hr);
    r.unadjusted_log_hr = std::log(unadjusted_hr);
    r.method_log_hr = std::log(method_hr);
    if (r.true_log_hr != 0.0) {
        r.percent_bias_unadjusted = 100.0 * (r.true_log_hr - r.unadjusted_log_hr) / r.true_log_hr;
    }
    const double gap = r.true_log_hr - r.unadjusted_log_hr;
    if (gap != 0.0) {
        r.percent_bias_eliminated = 100.0 * (1.0 - (r.true_log_hr - r.method_log_hr) / gap);
    }
    return r;
}

}  // namespace survbias
