#pragma once

// Multi-indices over the alphabet {0,...,d_V}: words indexing iterated
// integrals and operator compositions. Entry 0 is the time component.

#include <cstdint>
#include <string>
#include <vector>

#include "hofilter/errors.hpp"

namespace hofilter {

struct MultiIndex {
    std::vector<int> entries;

    MultiIndex() = default;
    MultiIndex(std::initializer_list<int> e) : entries(e) {}
    explicit MultiIndex(std::vector<int> e) : entries(std::move(e)) {}

    bool operator==(const MultiIndex&) const = default;
};

inline int mi_length(const MultiIndex& a) { return int(a.entries.size()); }

inline int mi_zero_count(const MultiIndex& a) {
    int c = 0;
    for (int e : a.entries) c += (e == 0);
    return c;
}

// drop the first entry; empty stays empty
inline MultiIndex mi_left_trunc(const MultiIndex& a) {
    if (a.entries.empty()) return {};
    return MultiIndex(std::vector<int>(a.entries.begin() + 1, a.entries.end()));
}

// drop the last entry; empty stays empty
inline MultiIndex mi_right_trunc(const MultiIndex& a) {
    if (a.entries.empty()) return {};
    return MultiIndex(std::vector<int>(a.entries.begin(), a.entries.end() - 1));
}

inline MultiIndex mi_concat(const MultiIndex& a, const MultiIndex& b) {
    std::vector<int> e = a.entries;
    e.insert(e.end(), b.entries.begin(), b.entries.end());
    return MultiIndex(std::move(e));
}

inline std::string mi_to_string(const MultiIndex& a) {
    std::string s = "(";
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a.entries[i]);
    }
    return s + ")";
}

// All words with n <= length <= m over {0..d_V}, ordered by length then
// lexicographically. The order is part of the reproducibility contract.
std::vector<MultiIndex> enumerate_indices(int n, int m, int d_V);

// Enumerated index family with the structural links the integral-table
// recursions need: for each word its right truncation (parent) and last letter.
// Only valid when the family is truncation-closed, i.e. n_low == 0.
struct IndexSet {
    int d_V = 0;
    int max_len = 0; // = m-1 when hosting M_{0,m-1}
    std::vector<MultiIndex> indices;
    std::vector<int> parent;    // position of mi_right_trunc(alpha); -1 for the empty word
    std::vector<int> last;      // last letter of alpha; -1 for the empty word
    std::vector<int> length;    // cached |alpha|

    static IndexSet up_to(int max_len, int d_V);

    std::size_t size() const { return indices.size(); }
    // position of the first word of a given length (words are length-sorted)
    std::size_t first_of_length(int len) const;
};

} // namespace hofilter
