#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "arim/radar.hpp"
#include "arim/timefreq.hpp"

namespace arim {

/// A consistent set of radar, transform and network-width settings.
/// "full" is the canonical 1024-sample / 2048-bin configuration; "desk" is
/// the reduced 256-sample / 512-bin configuration used for CI-sized runs.
struct ScaleProfile {
    std::string name;
    RadarParams radar;
    StftConfig shallow_stft;
    StftConfig deep_stft;
    std::size_t channel_divisor = 1;  // conv widths are divided by this (min 1)

    static ScaleProfile full() {
        return {"full", RadarParams::full(), StftConfig::full_shallow(),
                StftConfig::full_deep(), 1};
    }

    static ScaleProfile desk() {
        return {"desk", RadarParams::desk(), StftConfig::desk_shallow(), StftConfig::desk_deep(),
                2};
    }

    static ScaleProfile by_name(const std::string& name) {
        if (name == "full") return full();
        if (name == "desk") return desk();
        throw std::invalid_argument("unknown scale profile '" + name + "' (expected full|desk)");
    }

    std::size_t profile_len() const { return radar.profile_len(); }
};

}  // namespace arim
