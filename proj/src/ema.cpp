#include "xda/ema.hpp"

#include <cmath>

namespace xda {

namespace {

void check_mixable(const WeightVector& a, const WeightVector& b) {
    if (a.layout_id != b.layout_id) {
        throw LayoutMismatch("weight vectors have different layout ids: '" + a.layout_id +
                             "' vs '" + b.layout_id + "'");
    }
    if (a.values.size() != b.values.size()) {
        throw LayoutMismatch("weight vectors have different lengths: " +
                             std::to_string(a.values.size()) + " vs " +
                             std::to_string(b.values.size()));
    }
}

void check_finite(const WeightVector& v) {
    for (double x : v.values) {
        if (!std::isfinite(x)) {
            throw RangeError("weight vector holds a non-finite value");
        }
    }
}

void check_alpha(double alpha) {
    if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0) {
        throw RangeError("ema: alpha outside [0,1]");
    }
}

}  // namespace

WeightVector ema_step(const WeightVector& teacher, const WeightVector& student, double alpha) {
    check_alpha(alpha);
    check_mixable(teacher, student);
    check_finite(teacher);
    check_finite(student);
    WeightVector out;
    out.layout_id = teacher.layout_id;
    out.values.resize(teacher.values.size());
    const double complement = 1.0 - alpha;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = alpha * teacher.values[i] + complement * student.values[i];
    }
    return out;
}

WeightVector ema_closed_form(const WeightVector& w0, std::span<const WeightVector> students,
                             double alpha) {
    check_alpha(alpha);
    check_finite(w0);
    for (const WeightVector& s : students) {
        check_mixable(w0, s);
        check_finite(s);
    }
    const std::size_t k = students.size();
    WeightVector out;
    out.layout_id = w0.layout_id;
    out.values.resize(w0.values.size());
    const double lead = std::pow(alpha, static_cast<double>(k));
    for (std::size_t j = 0; j < out.values.size(); ++j) {
        out.values[j] = lead * w0.values[j];
    }
    const double complement = 1.0 - alpha;
    for (std::size_t i = 1; i <= k; ++i) {
        const double coef = std::pow(alpha, static_cast<double>(k - i)) * complement;
        const std::vector<double>& v = students[i - 1].values;
        for (std::size_t j = 0; j < out.values.size(); ++j) {
            out.values[j] += coef * v[j];
        }
    }
    return out;
}

}  // namespace xda
