#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hinet/data.hpp"

namespace hinet {

/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// CSV with header `minute,<channel names...>`; empty cell = missing.
std::string surgery_to_csv(const SurgeryRecord& record,
                           const std::vector<std::string>& channel_names = default_channel_names());

/// Parses one surgery CSV. Malformed input throws DataError naming the
/// offending row and column. Channel names are returned through `names`.
SurgeryRecord surgery_from_csv(const std::string& text, const std::string& surgery_id,
                               std::vector<std::string>* names = nullptr);
SurgeryRecord read_surgery_csv(const std::filesystem::path& path, const std::string& surgery_id,
                               std::vector<std::string>* names = nullptr);

struct ManifestEntry {
  std::string surgery_id;
  std::filesystem::path path;  // as written; relative paths resolve against the manifest
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);

/// Writes one CSV per surgery plus manifest.csv into `dir`.
void write_cohort(const std::filesystem::path& dir, const std::vector<SurgeryRecord>& records);

/// Loads every surgery listed in the manifest (a directory means dir/manifest.csv).
std::vector<SurgeryRecord> load_cohort(const std::filesystem::path& manifest_or_dir);

}  // namespace hinet
