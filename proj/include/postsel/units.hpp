// Copyright 2026 The postsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <numbers>

namespace postsel {

// Everything inside the library works in radians. Degrees only appear at
// the reporting boundary (CLI, Table-I style outputs).

constexpr double deg_to_rad(double deg) { return deg * (std::numbers::pi / 180.0); }
constexpr double rad_to_deg(double rad) { return rad * (180.0 / std::numbers::pi); }

// Variances: rad^2 -> deg^2.
constexpr double rad2_to_deg2(double rad2) {
  constexpr double f = 180.0 / std::numbers::pi;
  return rad2 * f * f;
}

}  // namespace postsel
