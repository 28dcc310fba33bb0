#include "fishmerge/types.hpp"

namespace fishmerge {

void validate(const ParameterSet& params) {
    if (params.entries.empty()) throw DataError("empty parameter set");
    for (const auto& [name, t] : params.entries) {
        if (name.empty()) throw DataError("tensor name must be nonempty");
        if (t.size() != t.data.size())
            throw DataError("tensor \"" + name + "\": data length does not match shape");
        if (!t.data.isFinite().all())
            throw NumericalError("tensor \"" + name + "\": non-finite element");
    }
}

bool congruent(const NamedTensors& a, const NamedTensors& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || !ia->second.same_shape(ib->second)) return false;
    }
    return true;
}

void require_congruent(const NamedTensors& a, const NamedTensors& b, const std::string& what) {
    if (!congruent(a, b)) throw DataError(what + ": name/shape mismatch");
}

}  // namespace fishmerge
