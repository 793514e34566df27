#pragma once

// Scenario and engine configs for the worked examples shipped with the CLI.
// `simulate --scenario NAME` and `reproduce NAME` resolve these by name.

namespace peridot::bundled {

// Three provisioned devices over q = 110 (increments 1, 21, 91); the device
// with increment 21 transmits 77, loses one packet, then transmits 9.
inline constexpr const char* kNonceRecoveryScenario = R"json({
  "members": [{"q": 110, "delta": 1}, {"q": 110, "delta": 21}, {"q": 110, "delta": 91}],
  "devices": 3,
  "epsilon": 0.05,
  "seed": 5,
  "t_bits": 32,
  "initial_cns": [0, 56, 0],
  "script": [
    {"device": 1, "erased": false},
    {"device": 1, "erased": true},
    {"device": 1, "erased": false}
  ]
})json";

inline constexpr const char* kNonceRecoveryEngineConfig = R"json({
  "epsilon": 0.05,
  "t_bits": 32
})json";

// Incrementing/decrementing pair over q = 20. The erasure pattern produces
// the delivered CN sequence 1, 2, 10, 9, 3, 7, 5, 3, 4. Identification here
// runs on CNs alone, so MAC checking inside the HMM is off (delivery still
// MAC-checks).
inline constexpr const char* kRetroactiveScenario = R"json({
  "members": [{"q": 20, "delta": 1}, {"q": 20, "delta": 19}],
  "devices": 2,
  "epsilon": 0.25,
  "seed": 6,
  "t_bits": 32,
  "initial_cns": [0, 11],
  "script": [
    {"device": 0, "erased": false},
    {"device": 0, "erased": false},
    {"device": 1, "erased": false},
    {"device": 1, "erased": false},
    {"device": 0, "erased": false},
    {"device": 1, "erased": true},
    {"device": 1, "erased": false},
    {"device": 1, "erased": true},
    {"device": 1, "erased": false},
    {"device": 1, "erased": true},
    {"device": 1, "erased": false},
    {"device": 0, "erased": false}
  ]
})json";

inline constexpr const char* kRetroactiveEngineConfig = R"json({
  "epsilon": 0.05,
  "mac_filter": false,
  "t_bits": 32
})json";

} // namespace peridot::bundled
