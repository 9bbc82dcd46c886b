// Copyright 2026 The mobfed Authors
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

#ifndef MOBFED_CHECKIN_H_
#define MOBFED_CHECKIN_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mobfed::data {

enum class Format {
  // user \t ISO-8601 time \t lat \t lon \t venue
  kBrightkiteGowallaTsv,
  // userid,placeid,datetime,lat,lon,city,category
  kWeeplaceCsv,
  // user \t venue \t category id \t category \t lat \t lon \t tz offset \t "Tue Apr 03 18:00:09 +0000 2012"
  kFoursquareTsv,
};

// "brightkite_gowalla_tsv" | "weeplace_csv" | "foursquare_tsv".
Format ParseFormatTag(std::string_view tag);
std::string_view FormatTag(Format f);

struct CheckIn {
  std::string user_id;
  std::int64_t timestamp = 0;  // UTC seconds
  double lat = 0.0;
  double lon = 0.0;
  std::string venue_id;
  std::string category;  // opaque; empty when the source has none

  bool operator==(const CheckIn&) const = default;
};

struct UserTrajectory {
  std::string user_id;
  std::vector<CheckIn> events;  // ascending timestamp
};

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t DaysFromCivil(std::int64_t year, unsigned month, unsigned day);
// "YYYY-MM-DDTHH:MM:SS[Z]" (also accepts a space separator) -> UTC seconds.
std::int64_t ParseIso8601Utc(std::string_view text);

// Throws ParseError carrying `line_no` on malformed input, out-of-range
// coordinates, non-positive timestamps, or an empty line.
CheckIn ParseCheckinLine(std::string_view line, Format format, std::size_t line_no = 0);

enum class ParseMode { kLenient, kStrict };

struct ParseResult {
  std::vector<CheckIn> records;
  std::size_t skipped = 0;
  // First few error messages, for diagnostics.
  std::vector<std::string> errors;
};

// Lenient mode skips and counts bad lines; strict mode rethrows the first.
ParseResult ParseCheckins(std::istream& in, Format format, ParseMode mode = ParseMode::kLenient);
ParseResult ParseCheckinFile(const std::filesystem::path& path, Format format,
                             ParseMode mode = ParseMode::kLenient);

// Canonical record: user \t timestamp \t lat \t lon \t venue \t category, with
// shortest round-trip decimal for coordinates.
std::string SerializeCheckin(const CheckIn& c);
CheckIn ParseCanonicalLine(std::string_view line, std::size_t line_no = 0);
void WriteRecords(std::ostream& out, const std::vector<UserTrajectory>& users);
void WriteRecordFile(const std::filesystem::path& path, const std::vector<UserTrajectory>& users);
std::vector<UserTrajectory> ReadRecordFile(const std::filesystem::path& path);

// Groups by user (ascending user id); events stably sorted by timestamp.
std::vector<UserTrajectory> GroupByUser(std::vector<CheckIn> records);

}  // namespace mobfed::data

#endif  // MOBFED_CHECKIN_H_
