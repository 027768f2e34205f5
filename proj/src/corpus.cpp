#include "melstorm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include "melstorm/error.hpp"
#include "melstorm/wav.hpp"

namespace melstorm {

namespace fs = std::filesystem;

namespace {

int parse_label(const std::string& text, const std::string& where) {
  if (text.size() != 1 || text[0] < '0' || text[0] > '9') {
    throw FormatError(where + ": label '" + text + "' is not a digit 0-9");
  }
  return text[0] - '0';
}

std::vector<AudioClip> load_manifest(const fs::path& root) {
  const fs::path manifest = root / "manifest.tsv";
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open " + manifest.string());

  struct Row {
    std::string path;
    int label;
    std::string speaker;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (line_no == 1 && !cols.empty() && cols[0] == "path") continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (cols.size() < 2) throw FormatError(where + ": expected columns path, label, speaker");
    rows.push_back({cols[0], parse_label(cols[1], where), cols.size() > 2 ? cols[2] : std::string{}});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.path < b.path; });

  std::vector<AudioClip> clips;
  clips.reserve(rows.size());
  for (const auto& row : rows) {
    auto clip = read_wav(root / row.path, row.label);
    clip.id = fs::path(row.path).replace_extension().generic_string();
    clip.speaker = row.speaker;
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace

std::vector<AudioClip> load_corpus(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error("corpus root " + root.string() + " is not a directory");
  if (fs::exists(root / "manifest.tsv")) return load_manifest(root);

  std::vector<std::pair<fs::path, int>> files;
  for (int digit = 0; digit < 10; ++digit) {
    const fs::path dir = root / std::to_string(digit);
    if (!fs::is_directory(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.emplace_back(entry.path(), digit);
    }
  }
  if (files.empty()) throw Error("no <digit>/*.wav files or manifest.tsv under " + root.string());
  std::sort(files.begin(), files.end());

  std::vector<AudioClip> clips;
  clips.reserve(files.size());
  for (const auto& [path, label] : files) {
    auto clip = read_wav(path, label);
    clip.id = fs::relative(path, root).replace_extension().generic_string();
    clips.push_back(std::move(clip));
  }
  return clips;
}

void write_corpus(const std::vector<AudioClip>& clips, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.tsv");
  if (!manifest) throw Error("cannot write " + (root / "manifest.tsv").string());
  manifest << "path\tlabel\tspeaker\n";
  for (const auto& clip : clips) {
    const std::string leaf = fs::path(clip.id).filename().string();
    const fs::path rel = fs::path(std::to_string(clip.label)) / (leaf + ".wav");
    write_wav(clip, root / rel);
    manifest << rel.generic_string() << '\t' << clip.label << '\t' << clip.speaker << '\n';
  }
}

}  // namespace melstorm
