#include "dense/manifest.hpp"

#include <fstream>
#include <sstream>

#include "dense/wav.hpp"
#include "json.hpp"

namespace dense {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const std::string& p, const fs::path& base) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.string();
  std::error_code ec;
  const fs::path rel = fs::relative(p, base, ec);
  return ec || rel.empty() ? p.string() : rel.generic_string();
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(const std::string& text, const fs::path& base_dir) {
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(where + e.what());
    }
    if (!j.is_object()) throw ManifestError(where + "expected a JSON object");
    auto field = [&](const char* key) -> std::optional<fs::path> {
      if (!j.contains(key)) return std::nullopt;
      if (!j[key].is_string()) throw ManifestError(where + "'" + key + "' must be a string");
      return resolve(j[key].get<std::string>(), base_dir);
    };
    ManifestRecord rec;
    for (const char* key : {"mixture", "target", "enrollment"}) {
      if (!j.contains(key)) throw ManifestError(where + "missing '" + key + "'");
    }
    rec.mixture = *field("mixture");
    rec.target = *field("target");
    rec.enrollment = *field("enrollment");
    rec.noise = field("noise");
    rec.estimate = field("estimate");
    if (j.contains("split")) {
      const std::string split = j["split"].is_string() ? j["split"].get<std::string>() : "";
      if (split != "train" && split != "heldout") throw ManifestError(where + "split must be \"train\" or \"heldout\"");
      rec.heldout = split == "heldout";
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot open manifest '" + path.string() + "' for writing");
  const fs::path base = path.parent_path();
  for (const ManifestRecord& r : records) {
    nlohmann::ordered_json j;
    j["mixture"] = relative_to(r.mixture, base);
    j["target"] = relative_to(r.target, base);
    j["enrollment"] = relative_to(r.enrollment, base);
    if (r.noise) j["noise"] = relative_to(*r.noise, base);
    if (r.estimate) j["estimate"] = relative_to(*r.estimate, base);
    j["split"] = r.heldout ? "heldout" : "train";
    out << j.dump() << '\n';
  }
}

Dataset load_dataset(const std::vector<ManifestRecord>& records, int* sample_rate) {
  if (records.empty()) throw ManifestError("manifest has no records");
  int rate = 0;
  auto load = [&](const fs::path& p) {
    if (!fs::exists(p)) throw ManifestError("missing file '" + p.string() + "'");
    WavFile w = wav_read(p);
    if (rate == 0) rate = w.sample_rate;
    if (w.sample_rate != rate) {
      throw ManifestError("'" + p.string() + "' is " + std::to_string(w.sample_rate) + " Hz, expected " +
                          std::to_string(rate) + " Hz");
    }
    return std::move(w.samples);
  };
  Dataset d;
  for (const ManifestRecord& r : records) {
    Example ex{load(r.mixture), load(r.target), load(r.enrollment)};
    if (r.noise) load(*r.noise);
    if (ex.mixture.size() != ex.target.size()) {
      throw ManifestError("'" + r.mixture.string() + "' and '" + r.target.string() + "' differ in length");
    }
    (r.heldout ? d.heldout : d.train).push_back(std::move(ex));
  }
  if (sample_rate) *sample_rate = rate;
  return d;
}

}  // namespace dense
