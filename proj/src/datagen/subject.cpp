#include "survbias/datagen/subject.hpp"

#include <string>

#include "survbias/error.hpp"

namespace survbias {

std::string_view to_string(Cohort c) noexcept {
    switch (c) {
        case Cohort::Control: return "control";
        case Cohort::Treated: return "treated";
        case Cohort::Prospective: return "prospective";
    }
    return "control";
}

Cohort parse_cohort(std::string_view s) {
    if (s == "control") return Cohort::Control;
    if (s == "treated") return Cohort::Treated;
    if (s == "prospective") return Cohort::Prospective;
    throw DataError("unknown cohort '" + std::string(s) + "'");
}

}  // namespace survbias
