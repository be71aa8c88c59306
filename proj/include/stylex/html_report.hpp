#pragma once

#include <string>
#include <vector>

namespace stylex {

// One highlight layer over a sentence: a score in [0, 1] per word.
struct HighlightTrack {
  std::string label;       // shown in the legend, e.g. "model" / "human"
  std::string color;       // css color name or #rrggbb
  std::vector<double> scores;
};

struct HighlightRow {
  std::string id;
  std::vector<std::string> words;
  std::vector<HighlightTrack> tracks;
};

// Deterministic static HTML: each word gets a background whose opacity is
// proportional to its score; a legend names the tracks. Scores must already
// be normalized to [0, 1].
void render_html(const std::vector<HighlightRow>& rows, const std::string& out_path);

// Conventional track colors mirroring the highlight idiom of the evaluation
// reports: human green, model pink, baseline blue.
std::string track_color(const std::string& kind);

}  // namespace stylex
