#include "qkd/tags.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace qkd {

bool TagStream::sorted() const {
    for (std::size_t i = 1; i < tags.size(); ++i)
        if (tag_less(tags[i], tags[i - 1])) return false;
    return true;
}

TagStream merge_sorted(const std::vector<TagStream>& streams) {
    TagStream out;
    if (streams.empty()) return out;
    out.party = streams.front().party;
    out.epoch = streams.front().epoch;
    std::size_t total = 0;
    for (const auto& s : streams) {
        if (s.party != out.party)
            throw std::invalid_argument("merge_sorted: mixed party labels");
        total += s.tags.size();
    }
    out.tags.reserve(total);

    // k-way merge via a heap of (stream, cursor)
    using Cur = std::pair<std::size_t, std::size_t>;
    auto cmp = [&](const Cur& a, const Cur& b) {
        return tag_less(streams[b.first].tags[b.second], streams[a.first].tags[a.second]);
    };
    std::priority_queue<Cur, std::vector<Cur>, decltype(cmp)> heap(cmp);
    for (std::size_t i = 0; i < streams.size(); ++i)
        if (!streams[i].tags.empty()) heap.push({i, 0});
    while (!heap.empty()) {
        auto [si, ci] = heap.top();
        heap.pop();
        out.tags.push_back(streams[si].tags[ci]);
        if (ci + 1 < streams[si].tags.size()) heap.push({si, ci + 1});
    }
    return out;
}

const char* party_name(Party p) { return p == Party::Alice ? "Alice" : "Bob"; }

} // namespace qkd
