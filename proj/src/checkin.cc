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

#include "mobfed/checkin.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "mobfed/errors.h"

namespace mobfed::data {
namespace {

constexpr std::size_t kMaxKeptErrors = 20;

std::vector<std::string_view> Split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

// Comma split honoring double-quoted fields ("" escapes a quote).
std::vector<std::string> SplitCsv(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (quoted) {
      if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double ParseDouble(std::string_view s, const char* field, std::size_t line_no) {
  s = Trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(std::string("bad ") + field + " '" + std::string(s) + "'", line_no);
  }
  return v;
}

std::int64_t ParseInt(std::string_view s, const char* field, std::size_t line_no) {
  s = Trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(std::string("bad ") + field + " '" + std::string(s) + "'", line_no);
  }
  return v;
}

unsigned Digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw std::invalid_argument("truncated");
  unsigned v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("not a digit");
    v = v * 10 + static_cast<unsigned>(s[i] - '0');
  }
  return v;
}

std::int64_t ToEpoch(std::int64_t y, unsigned mo, unsigned d, unsigned h, unsigned mi, unsigned s) {
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
    throw std::invalid_argument("calendar field out of range");
  }
  return DaysFromCivil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

// "Tue Apr 03 18:00:09 +0000 2012"
std::int64_t ParseFoursquareTime(std::string_view t) {
  static constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                               "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  auto parts = Split(Trim(t), ' ');
  if (parts.size() != 6) throw std::invalid_argument("expected 6 time fields");
  auto it = std::find(kMonths.begin(), kMonths.end(), parts[1]);
  if (it == kMonths.end()) throw std::invalid_argument("bad month");
  unsigned month = static_cast<unsigned>(it - kMonths.begin()) + 1;
  unsigned day = Digits(parts[2], 0, parts[2].size());
  std::string_view hms = parts[3];
  if (hms.size() != 8 || hms[2] != ':' || hms[5] != ':') throw std::invalid_argument("bad clock");
  std::string_view tz = parts[4];
  if (tz.size() != 5 || (tz[0] != '+' && tz[0] != '-')) throw std::invalid_argument("bad zone");
  std::int64_t offset = (Digits(tz, 1, 2) * 3600 + Digits(tz, 3, 2) * 60) * (tz[0] == '-' ? -1 : 1);
  std::int64_t year = Digits(parts[5], 0, parts[5].size());
  return ToEpoch(year, month, day, Digits(hms, 0, 2), Digits(hms, 3, 2), Digits(hms, 6, 2)) - offset;
}

void Validate(const CheckIn& c, std::size_t line_no) {
  if (c.user_id.empty()) throw ParseError("empty user id", line_no);
  if (c.venue_id.empty()) throw ParseError("empty venue id", line_no);
  if (!(c.lat >= -90.0 && c.lat <= 90.0)) throw ParseError("latitude out of range", line_no);
  if (!(c.lon >= -180.0 && c.lon <= 180.0)) throw ParseError("longitude out of range", line_no);
  if (c.timestamp <= 0) throw ParseError("timestamp must be positive", line_no);
}

std::string FormatDouble(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

Format ParseFormatTag(std::string_view tag) {
  if (tag == "brightkite_gowalla_tsv") return Format::kBrightkiteGowallaTsv;
  if (tag == "weeplace_csv") return Format::kWeeplaceCsv;
  if (tag == "foursquare_tsv") return Format::kFoursquareTsv;
  throw ConfigError("unknown format tag '" + std::string(tag) + "'");
}

std::string_view FormatTag(Format f) {
  switch (f) {
    case Format::kBrightkiteGowallaTsv:
      return "brightkite_gowalla_tsv";
    case Format::kWeeplaceCsv:
      return "weeplace_csv";
    case Format::kFoursquareTsv:
      return "foursquare_tsv";
  }
  return "";
}

std::int64_t DaysFromCivil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::int64_t ParseIso8601Utc(std::string_view t) {
  t = Trim(t);
  if (!t.empty() && t.back() == 'Z') t.remove_suffix(1);
  if (t.size() != 19 || t[4] != '-' || t[7] != '-' || (t[10] != 'T' && t[10] != ' ') || t[13] != ':' ||
      t[16] != ':') {
    throw std::invalid_argument("expected YYYY-MM-DDTHH:MM:SS");
  }
  return ToEpoch(Digits(t, 0, 4), Digits(t, 5, 2), Digits(t, 8, 2), Digits(t, 11, 2), Digits(t, 14, 2),
                 Digits(t, 17, 2));
}

CheckIn ParseCheckinLine(std::string_view line, Format format, std::size_t line_no) {
  line = Trim(line);
  if (line.empty()) throw ParseError("empty line", line_no);
  CheckIn c;
  try {
    switch (format) {
      case Format::kBrightkiteGowallaTsv: {
        auto f = Split(line, '\t');
        if (f.size() != 5) throw ParseError("expected 5 tab-separated fields, got " + std::to_string(f.size()), line_no);
        c.user_id = std::string(f[0]);
        c.timestamp = ParseIso8601Utc(f[1]);
        c.lat = ParseDouble(f[2], "latitude", line_no);
        c.lon = ParseDouble(f[3], "longitude", line_no);
        c.venue_id = std::string(Trim(f[4]));
        break;
      }
      case Format::kWeeplaceCsv: {
        auto f = SplitCsv(line);
        if (f.size() < 5) throw ParseError("expected at least 5 CSV fields", line_no);
        c.user_id = f[0];
        c.venue_id = f[1];
        c.timestamp = ParseIso8601Utc(f[2]);
        c.lat = ParseDouble(f[3], "latitude", line_no);
        c.lon = ParseDouble(f[4], "longitude", line_no);
        if (f.size() >= 7) c.category = f[6];
        break;
      }
      case Format::kFoursquareTsv: {
        auto f = Split(line, '\t');
        if (f.size() != 8) throw ParseError("expected 8 tab-separated fields, got " + std::to_string(f.size()), line_no);
        c.user_id = std::string(f[0]);
        c.venue_id = std::string(f[1]);
        c.category = std::string(f[3]);
        c.lat = ParseDouble(f[4], "latitude", line_no);
        c.lon = ParseDouble(f[5], "longitude", line_no);
        c.timestamp = ParseFoursquareTime(f[7]);
        break;
      }
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad timestamp: ") + e.what(), line_no);
  }
  Validate(c, line_no);
  return c;
}

ParseResult ParseCheckins(std::istream& in, Format format, ParseMode mode) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && format == Format::kWeeplaceCsv && line.rfind("userid", 0) == 0) continue;
    try {
      result.records.push_back(ParseCheckinLine(line, format, line_no));
    } catch (const ParseError& e) {
      if (mode == ParseMode::kStrict) throw;
      ++result.skipped;
      if (result.errors.size() < kMaxKeptErrors) result.errors.emplace_back(e.what());
    }
  }
  return result;
}

ParseResult ParseCheckinFile(const std::filesystem::path& path, Format format, ParseMode mode) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return ParseCheckins(in, format, mode);
}

std::string SerializeCheckin(const CheckIn& c) {
  std::string out;
  out.reserve(64);
  out += c.user_id;
  out += '\t';
  out += std::to_string(c.timestamp);
  out += '\t';
  out += FormatDouble(c.lat);
  out += '\t';
  out += FormatDouble(c.lon);
  out += '\t';
  out += c.venue_id;
  out += '\t';
  out += c.category;
  return out;
}

CheckIn ParseCanonicalLine(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto f = Split(line, '\t');
  if (f.size() != 6) throw ParseError("canonical record needs 6 fields", line_no);
  CheckIn c;
  c.user_id = std::string(f[0]);
  c.timestamp = ParseInt(f[1], "timestamp", line_no);
  c.lat = ParseDouble(f[2], "latitude", line_no);
  c.lon = ParseDouble(f[3], "longitude", line_no);
  c.venue_id = std::string(f[4]);
  c.category = std::string(f[5]);
  Validate(c, line_no);
  return c;
}

void WriteRecords(std::ostream& out, const std::vector<UserTrajectory>& users) {
  for (const auto& u : users) {
    for (const auto& c : u.events) out << SerializeCheckin(c) << '\n';
  }
}

void WriteRecordFile(const std::filesystem::path& path, const std::vector<UserTrajectory>& users) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  WriteRecords(out, users);
}

std::vector<UserTrajectory> ReadRecordFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<CheckIn> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    records.push_back(ParseCanonicalLine(line, line_no));
  }
  return GroupByUser(std::move(records));
}

std::vector<UserTrajectory> GroupByUser(std::vector<CheckIn> records) {
  std::map<std::string, std::vector<CheckIn>> by_user;
  for (auto& c : records) by_user[c.user_id].push_back(std::move(c));
  std::vector<UserTrajectory> out;
  out.reserve(by_user.size());
  for (auto& [id, events] : by_user) {
    std::stable_sort(events.begin(), events.end(),
                     [](const CheckIn& a, const CheckIn& b) { return a.timestamp < b.timestamp; });
    out.push_back(UserTrajectory{id, std::move(events)});
  }
  return out;
}

}  // namespace mobfed::data
