#include "clozegen/backends.hpp"

#include <cmath>
#include <sstream>

namespace clozegen {

std::string ChatPrompt::render_text() const {
    std::ostringstream os;
    os << "[SYSTEM]\n" << system;
    for (const auto& s : shots) {
        os << "\n\n[USER]\n" << s.user << "\n\n[ASSISTANT]\n" << s.assistant;
    }
    os << "\n\n[USER]\n" << user;
    return os.str();
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t n = std::min(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    for (double v : a) na += v * v;
    for (double v : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace clozegen
