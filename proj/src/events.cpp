#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "sts/data_io.hpp"
#include "sts/errors.hpp"

namespace sts {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static const unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : kDays[m - 1];
}

class Cursor {
 public:
  explicit Cursor(const std::string& s) : s_(s) {}
  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  void expect(char c) {
    if (peek() != c) fail();
    ++pos_;
  }
  unsigned digits(std::size_t n) {
    unsigned v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char c = peek();
      if (c < '0' || c > '9') fail();
      v = v * 10 + static_cast<unsigned>(c - '0');
      ++pos_;
    }
    return v;
  }
  double fraction() {
    double scale = 0.1, v = 0.0;
    bool any = false;
    while (peek() >= '0' && peek() <= '9') {
      v += scale * (peek() - '0');
      scale *= 0.1;
      ++pos_;
      any = true;
    }
    if (!any) fail();
    return v;
  }
  [[noreturn]] void fail() const { throw DataError("malformed timestamp `" + s_ + "`"); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

Timestamp parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  Cursor cur(text);
  const auto year = static_cast<std::int64_t>(cur.digits(4));
  cur.expect('-');
  const unsigned month = cur.digits(2);
  cur.expect('-');
  const unsigned day = cur.digits(2);
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) cur.fail();

  unsigned hour = 0, minute = 0, second = 0;
  double frac = 0.0;
  std::int64_t offset = 0;
  if (!cur.done()) {
    if (cur.peek() != 'T' && cur.peek() != ' ') cur.fail();
    cur.expect(cur.peek());
    hour = cur.digits(2);
    cur.expect(':');
    minute = cur.digits(2);
    cur.expect(':');
    second = cur.digits(2);
    if (hour > 23 || minute > 59 || second > 59) cur.fail();
    if (cur.peek() == '.') {
      cur.expect('.');
      frac = cur.fraction();
    }
    if (cur.peek() == 'Z') {
      cur.expect('Z');
    } else if (cur.peek() == '+' || cur.peek() == '-') {
      const int sign = cur.peek() == '+' ? 1 : -1;
      cur.expect(cur.peek());
      const unsigned oh = cur.digits(2);
      cur.expect(':');
      const unsigned om = cur.digits(2);
      if (oh > 23 || om > 59) cur.fail();
      offset = sign * static_cast<std::int64_t>(oh * 3600 + om * 60);
    }
  }
  if (!cur.done()) cur.fail();
  Timestamp ts;
  ts.seconds = days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second - offset;
  ts.fraction = frac;
  return ts;
}

std::string format_timestamp(std::int64_t seconds) {
  const std::int64_t days = floor_div(seconds, 86400);
  const std::int64_t rem = seconds - days * 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

IngestResult ingest_events(std::istream& in, const RegionGraph& g, const IngestOptions& opt) {
  if (opt.slot_seconds <= 0) throw ArgumentError("slot duration must be positive");
  if (opt.n_slots == 0) throw ArgumentError("ingest needs at least one slot");
  if (opt.categories.empty()) throw ArgumentError("ingest needs a category list");

  IngestResult res;
  res.data = AnomalyTensor::zeros(g.size(), opt.n_slots, opt.categories.size());
  res.data.slot_seconds = opt.slot_seconds;
  res.data.t0 = opt.t0;
  res.data.category_names = opt.categories;

  std::string line;
  if (!std::getline(in, line) || trim(line) != "timestamp,region_id,category,value") {
    throw DataError("event file must start with the header `timestamp,region_id,category,value`");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++res.records;
    auto fail = [&](const std::string& why) { res.errors.push_back("line " + std::to_string(line_no) + ": " + why); };

    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 4) {
      fail("expected 4 fields, got " + std::to_string(fields.size()));
      continue;
    }
    Timestamp ts;
    try {
      ts = parse_timestamp(fields[0]);
    } catch (const DataError& e) {
      fail(e.what());
      continue;
    }
    std::size_t region = 0;
    {
      const auto& s = fields[1];
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), region);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || region >= g.size()) {
        fail("unknown region `" + s + "`");
        continue;
      }
    }
    std::size_t category = opt.categories.size();
    for (std::size_t c = 0; c < opt.categories.size(); ++c)
      if (opt.categories[c] == fields[2]) category = c;
    if (category == opt.categories.size()) {
      fail("unknown category `" + fields[2] + "`");
      continue;
    }
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument(fields[3]);
    } catch (const std::exception&) {
      fail("malformed value `" + fields[3] + "`");
      continue;
    }
    if (!(value > 0.0) || !std::isfinite(value)) {
      fail("value must be positive, got `" + fields[3] + "`");
      continue;
    }

    // Whole seconds decide the slot: with integral t0 and slot length a
    // sub-second fraction can never cross a boundary.
    const std::int64_t offset = ts.seconds - opt.t0;
    if (offset < 0) {
      ++res.dropped_out_of_range;
      continue;
    }
    const std::int64_t slot = offset / opt.slot_seconds;
    if (slot >= static_cast<std::int64_t>(opt.n_slots)) {
      ++res.dropped_out_of_range;
      continue;
    }
    res.data.at(region, static_cast<std::size_t>(slot), category) += value;
  }

  if (res.records > 0 &&
      static_cast<double>(res.errors.size()) > opt.max_error_fraction * static_cast<double>(res.records)) {
    std::string msg = std::to_string(res.errors.size()) + " of " + std::to_string(res.records) +
                      " event records are invalid";
    for (std::size_t i = 0; i < res.errors.size() && i < 5; ++i) msg += "\n  " + res.errors[i];
    throw DataError(msg);
  }
  return res;
}

void export_events(std::ostream& out, const AnomalyTensor& x) {
  out << "timestamp,region_id,category,value\n";
  char buf[40];
  for (std::size_t t = 0; t < x.n_slots; ++t) {
    const std::string stamp = format_timestamp(x.t0 + static_cast<std::int64_t>(t) * x.slot_seconds);
    for (std::size_t r = 0; r < x.n_regions; ++r) {
      for (std::size_t c = 0; c < x.n_categories; ++c) {
        const double v = x.at(r, t, c);
        const std::string prefix = stamp + "," + std::to_string(r) + "," + x.category_names[c] + ",";
        const double units = std::floor(v);
        for (double k = 0; k < units; k += 1.0) out << prefix << "1\n";
        if (v > units) {
          std::snprintf(buf, sizeof buf, "%.17g", v - units);
          out << prefix << buf << '\n';
        }
      }
    }
  }
}

std::size_t count_events(const AnomalyTensor& x) {
  std::size_t n = 0;
  for (double v : x.values) {
    const double units = std::floor(v);
    n += static_cast<std::size_t>(units) + (v > units ? 1 : 0);
  }
  return n;
}

RebinResult rebin(const AnomalyTensor& x, std::size_t factor) {
  if (factor == 0) throw ArgumentError("rebin factor must be >= 1");
  const std::size_t slots = x.n_slots / factor;
  if (slots == 0) {
    throw ArgumentError("rebin factor " + std::to_string(factor) + " exceeds the " + std::to_string(x.n_slots) +
                        " available slots");
  }
  RebinResult res;
  res.dropped_slots = x.n_slots - slots * factor;
  res.data = AnomalyTensor::zeros(x.n_regions, slots, x.n_categories);
  res.data.slot_seconds = x.slot_seconds * static_cast<std::int64_t>(factor);
  res.data.t0 = x.t0;
  res.data.category_names = x.category_names;
  for (std::size_t r = 0; r < x.n_regions; ++r)
    for (std::size_t t = 0; t < slots * factor; ++t)
      for (std::size_t c = 0; c < x.n_categories; ++c) res.data.at(r, t / factor, c) += x.at(r, t, c);
  return res;
}

}  // namespace sts
