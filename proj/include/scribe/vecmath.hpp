#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace scribe {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm(const std::vector<double>& a) {
    return std::sqrt(dot(a, a));
}

inline std::vector<double> normalized(const std::vector<double>& a) {
    const double n = norm(a);
    if (n == 0.0) {
        return a;  // zero vector stays zero; cosine against it is 0 by convention
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] / n;
    }
    return out;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return 1.0 - cosine_similarity(a, b);
}

inline std::vector<double> mean_vector(const std::vector<const std::vector<double>*>& members) {
    if (members.empty()) {
        throw std::invalid_argument("mean_vector: empty member set");
    }
    std::vector<double> out(members.front()->size(), 0.0);
    for (const auto* m : members) {
        if (m->size() != out.size()) {
            throw std::invalid_argument("mean_vector: dimension mismatch");
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += (*m)[i];
        }
    }
    for (double& v : out) {
        v /= double(members.size());
    }
    return out;
}

}  // namespace scribe
