// Copyright 2026 The pmrate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pmrate::csv {

/// Splits one CSV line. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field when it contains a separator, quote or newline.
std::string escape(std::string_view field);

/// Formats a double with enough digits to round-trip.
std::string format_double(double v);

}  // namespace pmrate::csv
