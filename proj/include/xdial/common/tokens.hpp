// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace xdial {

// Reserved vocabulary ids.
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kMask = 4;
inline constexpr int kCls = 5;
inline constexpr int kFirstOrdinary = 6;

}  // namespace xdial
