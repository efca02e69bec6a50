#include "clint/permute.hpp"

#include "clint/errors.hpp"

namespace clint {

std::vector<TokenId> permute_ngrams(const std::vector<TokenId>& ids, int n, Rng& rng) {
    if (n < 1) throw InputError("permute_ngrams granularity must be at least 1");
    const size_t len = ids.size();
    const size_t chunk = static_cast<size_t>(n);
    std::vector<size_t> starts;
    for (size_t s = 0; s < len; s += chunk) starts.push_back(s);
    rng.shuffle(starts);

    std::vector<TokenId> out;
    out.reserve(len);
    for (const size_t s : starts) {
        const size_t e = std::min(s + chunk, len);
        out.insert(out.end(), ids.begin() + static_cast<ptrdiff_t>(s),
                   ids.begin() + static_cast<ptrdiff_t>(e));
    }
    return out;
}

}  // namespace clint
