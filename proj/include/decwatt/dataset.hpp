#pragma once

#include <optional>
#include <string>
#include <vector>

#include "decwatt/features.hpp"
#include "decwatt/models.hpp"

namespace decwatt::fit {

/// Rows sharing a group key are the same coded sequence/configuration/QP at
/// increasing frame counts; frame-level differencing works within a group.
struct GroupKey {
    std::string sequence;
    std::string config;
    int qp = 0;
    bool operator==(const GroupKey&) const = default;
    bool operator<(const GroupKey& o) const {
        if (sequence != o.sequence) return sequence < o.sequence;
        if (config != o.config) return config < o.config;
        return qp < o.qp;
    }
};

struct DatasetRow {
    std::string stream_id;
    models::BitstreamMeta meta;
    std::optional<features::FeatureVector> features;
    double energy_j = 0; // measured decoding energy, must stay > 0
    GroupKey group;
    int frame_count = 0;
};

struct Dataset {
    std::vector<DatasetRow> rows;
};

} // namespace decwatt::fit
