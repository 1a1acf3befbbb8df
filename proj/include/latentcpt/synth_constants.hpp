#pragma once

// Frozen constants of the synthetic corpus generator. Bump kSynthVersion
// whenever any value changes; acceptance baselines are tied to it.

namespace latentcpt::synth {

inline constexpr const char* kSynthVersion = "synth-v1";

// Layering.
inline constexpr int kMinLayers = 2;
inline constexpr int kMaxLayers = 5;
inline constexpr double kInterfaceMin = 0.2;  // m
inline constexpr double kInterfaceMax = 9.8;  // m
inline constexpr double kIcMin = 1.3;
inline constexpr double kIcMax = 3.6;
inline constexpr double kQcMin = 20.0;
inline constexpr double kQcMax = 250.0;
inline constexpr double kQcScatter = 0.15;  // scatter of the ic -> qc trend, in trend units

// AR(1) measurement noise on the 1 cm grid.
inline constexpr double kNoiseRho = 0.9;
inline constexpr double kIcNoiseSigma = 0.08;
inline constexpr double kQcLogNoiseSigma = 0.10;
inline constexpr double kIcFloor = 1.0;

// Sampling: spacing drawn from {1, 2} cm, recorded to kMaxDepthCm.
inline constexpr int kMaxDepthCm = 1020;

// Site parameter ranges.
inline constexpr double kPgaMin = 0.1, kPgaMax = 0.6;
inline constexpr double kGwdMin = 0.5, kGwdMax = 4.0;
inline constexpr double kLMin = 10.0, kLMax = 500.0;
inline constexpr double kSlopeMin = 0.0, kSlopeMax = 5.0;
inline constexpr double kElevBase = 0.5, kElevPerGwd = 0.6, kElevSpread = 3.0;

// Label rule:
//   soil  = (kSoilPivot - mean noise-free ic over [1, 3) m) / kSoilScale
//   gate  = 1 / (1 + exp((gwd - kGateGwd) / kGateWidth))
//   score = kIntercept + kSoilWeight * soil * gate
//         + kPgaWeight * (pga - kPgaPivot) / kPgaScale
//         - kLWeight * ln(l_river / kLPivot)
//         - kGwdWeight * (gwd - kGwdPivot)
//         + kLabelNoise * N(0, 1)
//   label = score > 0
inline constexpr double kSoilTop = 1.0, kSoilBottom = 3.0;
inline constexpr double kSoilPivot = 2.4, kSoilScale = 0.5;
inline constexpr double kGateGwd = 2.5, kGateWidth = 0.35;
inline constexpr double kIntercept = 0.7;
inline constexpr double kSoilWeight = 1.6;
inline constexpr double kPgaWeight = 1.0, kPgaPivot = 0.35, kPgaScale = 0.15;
inline constexpr double kLWeight = 0.7, kLPivot = 100.0;
inline constexpr double kGwdWeight = 0.5, kGwdPivot = 2.25;
inline constexpr double kLabelNoise = 0.6;

}  // namespace latentcpt::synth
