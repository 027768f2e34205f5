#pragma once

#include <filesystem>
#include <vector>

#include "melstorm/audio.hpp"

namespace melstorm {

/// Loads a labelled corpus from disk. If `root/manifest.tsv` exists its rows
/// (path, label, speaker; paths relative to root) are used; otherwise every
/// `root/<digit>/*.wav` file. Order is sorted by path so loading is
/// deterministic.
std::vector<AudioClip> load_corpus(const std::filesystem::path& root);

/// Writes clips as `root/<label>/<id>.wav` plus a manifest.tsv.
void write_corpus(const std::vector<AudioClip>& clips, const std::filesystem::path& root);

}  // namespace melstorm
