#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dbsn {

// Checkpoint file: a little-endian binary container for the full training
// state plus the resolved config echo.
//
//   bytes 0..3   magic "DBSN"
//   byte  4      format version (1)
//   u32          config length, then that many UTF-8 bytes (resolved RunConfig JSON)
//   u32          entry count
//   per entry:   u16 name length, name bytes, u64 value count, f64 values
//
// Entries are the trainer's named state (parameters, optimizer slots, step
// counters); loading one into a freshly constructed trainer resumes training
// bitwise in sequential mode.

struct Checkpoint {
  std::string config_json;
  std::map<std::string, std::vector<double>> state;

  std::int64_t step() const;  // from the "meta" record
};

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::map<std::string, std::vector<double>>& state);

Checkpoint load_checkpoint(const std::string& path);

// inspection aid: dumps the container as JSON
void export_checkpoint_json(const std::string& checkpoint_path, const std::string& json_path);

}  // namespace dbsn
