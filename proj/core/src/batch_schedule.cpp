#include "depthshape/batch_schedule.hpp"

#include <algorithm>

namespace depthshape {

std::vector<Batch> batch_schedule(std::span<const SourceSpec> sources, int batch_size, Rng &rng) {
    const int n_sources = static_cast<int>(sources.size());
    if (n_sources == 0) throw ConfigError("batch_schedule: no sources");
    if (batch_size < n_sources)
        throw ConfigError("batch_schedule: batch size must be >= the number of sources");
    for (const SourceSpec &src : sources)
        if (src.items.empty()) throw ConfigError("batch_schedule: source '" + src.name + "' is empty");

    struct SourceState {
        std::vector<int> order;
        size_t cursor = 0;
        bool exhausted_once = false;
    };
    std::vector<SourceState> state(static_cast<size_t>(n_sources));
    auto reshuffle = [&](int s) {
        SourceState &st = state[static_cast<size_t>(s)];
        st.order.resize(sources[static_cast<size_t>(s)].items.size());
        for (size_t i = 0; i < st.order.size(); ++i) st.order[i] = static_cast<int>(i);
        rng.shuffle(st.order);
        st.cursor = 0;
    };
    for (int s = 0; s < n_sources; ++s) reshuffle(s);

    auto next_item = [&](int s) -> const std::string & {
        SourceState &st = state[static_cast<size_t>(s)];
        if (st.cursor >= st.order.size()) {
            st.exhausted_once = true;
            reshuffle(s);
        }
        const int idx = st.order[st.cursor++];
        if (st.cursor == st.order.size()) st.exhausted_once = true;
        return sources[static_cast<size_t>(s)].items[static_cast<size_t>(idx)];
    };

    const int base = batch_size / n_sources;
    const int remainder = batch_size % n_sources;

    std::vector<Batch> batches;
    for (int b = 0;; ++b) {
        Batch batch;
        batch.reserve(static_cast<size_t>(batch_size));
        const int offset = remainder == 0 ? 0 : (b * remainder) % n_sources;
        for (int s = 0; s < n_sources; ++s) {
            int quota = base;
            for (int j = 0; j < remainder; ++j)
                if ((offset + j) % n_sources == s) ++quota;
            for (int k = 0; k < quota; ++k) batch.push_back({s, next_item(s)});
        }
        batches.push_back(std::move(batch));
        const bool done = std::all_of(state.begin(), state.end(),
                                      [](const SourceState &st) { return st.exhausted_once; });
        if (done) break;
    }
    return batches;
}

} // namespace depthshape
