#include "qiv/estimate.hpp"

#include "qiv/error.hpp"
#include "qiv/stats.hpp"

namespace qiv {

void set_wald_interval(AttEstimate& est, double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Config, "confidence level must lie in (0, 1)");
    est.level = level;
    const double zq = stats::normal_quantile(0.5 + 0.5 * level);
    est.ci_low = est.gamma_hat - zq * est.se;
    est.ci_high = est.gamma_hat + zq * est.se;
}

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "config";
        case ErrorKind::Data: return "data";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::WeakQiv: return "weak-qiv";
        case ErrorKind::Positivity: return "positivity";
        case ErrorKind::Separation: return "separation";
        case ErrorKind::RankDeficient: return "rank-deficient";
        case ErrorKind::Numerical: return "numerical";
    }
    return "unknown";
}

}  // namespace qiv
