#include "hofilter/multi_index.hpp"

#include <map>

namespace hofilter {

std::vector<MultiIndex> enumerate_indices(int n, int m, int d_V) {
    if (n < 0 || n > m) throw RejectedInput("enumerate_indices: need 0 <= n <= m");
    if (d_V < 0) throw RejectedInput("enumerate_indices: d_V must be nonnegative");

    std::vector<MultiIndex> out;
    for (int len = n; len <= m; ++len) {
        // count words of this length, guard against silly sizes
        double count = 1.0;
        for (int i = 0; i < len; ++i) count *= double(d_V + 1);
        if (count > 1e7) throw RejectedInput("enumerate_indices: requested family too large");

        // odometer in base d_V+1, most significant digit first = lexicographic
        std::vector<int> w(len, 0);
        while (true) {
            out.emplace_back(w);
            int pos = len - 1;
            while (pos >= 0 && w[pos] == d_V) w[pos--] = 0;
            if (pos < 0) break;
            ++w[pos];
        }
    }
    return out;
}

IndexSet IndexSet::up_to(int max_len, int d_V) {
    IndexSet s;
    s.d_V = d_V;
    s.max_len = max_len;
    s.indices = enumerate_indices(0, max_len, d_V);

    std::map<std::vector<int>, int> pos;
    for (std::size_t i = 0; i < s.indices.size(); ++i) pos[s.indices[i].entries] = int(i);

    s.parent.resize(s.indices.size());
    s.last.resize(s.indices.size());
    s.length.resize(s.indices.size());
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
        const auto& a = s.indices[i];
        s.length[i] = mi_length(a);
        if (a.entries.empty()) {
            s.parent[i] = -1;
            s.last[i] = -1;
        } else {
            s.parent[i] = pos.at(mi_right_trunc(a).entries);
            s.last[i] = a.entries.back();
        }
    }
    return s;
}

std::size_t IndexSet::first_of_length(int len) const {
    // Sum_{k<len} (d_V+1)^k, cheap for the tiny sets we use
    std::size_t off = 0, pw = 1;
    for (int k = 0; k < len; ++k) {
        off += pw;
        pw *= std::size_t(d_V + 1);
    }
    return off;
}

} // namespace hofilter
