#include "hinet/cohort_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hinet {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string surgery_to_csv(const SurgeryRecord& record, const std::vector<std::string>& channel_names) {
  if (channel_names.size() != record.channels)
    throw DataError("surgery " + record.id + " has " + std::to_string(record.channels) + " channels but " +
                    std::to_string(channel_names.size()) + " names were given");
  std::string out = "minute";
  for (const auto& n : channel_names) out += "," + n;
  out += '\n';
  for (std::size_t t = 0; t < record.minutes; ++t) {
    out += std::to_string(t);
    for (std::size_t c = 0; c < record.channels; ++c) {
      out += ',';
      if (record.is_observed(c, t)) out += format_value(record.at(c, t));
    }
    out += '\n';
  }
  return out;
}

SurgeryRecord surgery_from_csv(const std::string& text, const std::string& surgery_id,
                               std::vector<std::string>* names) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(surgery_id + ": empty file");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "minute")
    throw DataError(surgery_id + ": row 1 column 1: expected header 'minute'");
  const std::size_t channels = header.size() - 1;
  if (channels == 0) throw DataError(surgery_id + ": row 1: no channel columns");
  if (names) names->assign(header.begin() + 1, header.end());

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<std::uint8_t>> seen;
  std::size_t row_no = 1;
  long first_minute = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError(surgery_id + ": row " + std::to_string(row_no) + ": expected " +
                      std::to_string(header.size()) + " columns, found " + std::to_string(fields.size()));
    long minute = 0;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), minute);
    if (ec != std::errc() || p != fields[0].data() + fields[0].size())
      throw DataError(surgery_id + ": row " + std::to_string(row_no) + " column 1: bad minute '" + fields[0] + "'");
    if (rows.empty()) first_minute = minute;
    if (minute != first_minute + static_cast<long>(rows.size()))
      throw DataError(surgery_id + ": row " + std::to_string(row_no) + " column 1: minutes must be consecutive");
    std::vector<double> vals(channels, 0.0);
    std::vector<std::uint8_t> obs(channels, 0);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::string& f = fields[c + 1];
      if (f.empty()) continue;
      double v = 0.0;
      auto [q, ec2] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec2 != std::errc() || q != f.data() + f.size() || !std::isfinite(v))
        throw DataError(surgery_id + ": row " + std::to_string(row_no) + " column " + std::to_string(c + 2) +
                        " (" + header[c + 1] + "): bad value '" + f + "'");
      vals[c] = v;
      obs[c] = 1;
    }
    rows.push_back(std::move(vals));
    seen.push_back(std::move(obs));
  }
  if (rows.empty()) throw DataError(surgery_id + ": no data rows");
  SurgeryRecord rec(surgery_id, channels, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      rec.at(c, t) = rows[t][c];
      rec.observed[c * rec.minutes + t] = seen[t][c];
    }
  return rec;
}

SurgeryRecord read_surgery_csv(const fs::path& path, const std::string& surgery_id, std::vector<std::string>* names) {
  return surgery_from_csv(read_text(path), surgery_id, names);
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
  const std::string text = read_text(manifest);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_fields(line) != std::vector<std::string>{"surgery_id", "path"})
    throw DataError(manifest.string() + ": row 1: expected header 'surgery_id,path'");
  std::vector<ManifestEntry> out;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw DataError(manifest.string() + ": row " + std::to_string(row_no) + ": expected 'surgery_id,path'");
    out.push_back({f[0], f[1]});
  }
  return out;
}

void write_manifest(const fs::path& manifest, const std::vector<ManifestEntry>& entries) {
  std::string out = "surgery_id,path\n";
  for (const auto& e : entries) out += e.surgery_id + "," + e.path.generic_string() + "\n";
  atomic_write(manifest, out);
}

void write_cohort(const fs::path& dir, const std::vector<SurgeryRecord>& records) {
  fs::create_directories(dir / "surgeries");
  std::vector<ManifestEntry> entries;
  entries.reserve(records.size());
  for (const auto& r : records) {
    const fs::path rel = fs::path("surgeries") / (r.id + ".csv");
    atomic_write(dir / rel, surgery_to_csv(r));
    entries.push_back({r.id, rel});
  }
  write_manifest(dir / "manifest.csv", entries);
}

std::vector<SurgeryRecord> load_cohort(const fs::path& manifest_or_dir) {
  const fs::path manifest = fs::is_directory(manifest_or_dir) ? manifest_or_dir / "manifest.csv" : manifest_or_dir;
  const auto entries = read_manifest(manifest);
  std::vector<SurgeryRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const fs::path p = e.path.is_absolute() ? e.path : manifest.parent_path() / e.path;
    out.push_back(read_surgery_csv(p, e.surgery_id));
  }
  return out;
}

}  // namespace hinet
