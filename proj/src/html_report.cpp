#include "stylex/html_report.hpp"

#include <cstdio>
#include <fstream>

#include "stylex/errors.hpp"

namespace stylex {

std::string track_color(const std::string& kind) {
  if (kind == "human") return "#34a853";
  if (kind == "model") return "#e8735a";
  if (kind == "baseline") return "#4a90d9";
  return "#999999";
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_opacity(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// "#rrggbb" + alpha -> "rgba(r,g,b,a)"
std::string rgba(const std::string& hex, double alpha) {
  int r = 153, g = 153, b = 153;
  if (hex.size() == 7 && hex[0] == '#') {
    r = static_cast<int>(std::strtol(hex.substr(1, 2).c_str(), nullptr, 16));
    g = static_cast<int>(std::strtol(hex.substr(3, 2).c_str(), nullptr, 16));
    b = static_cast<int>(std::strtol(hex.substr(5, 2).c_str(), nullptr, 16));
  }
  char buf[48];
  std::snprintf(buf, sizeof(buf), "rgba(%d,%d,%d,%s)", r, g, b,
                format_opacity(alpha).c_str());
  return buf;
}

}  // namespace

void render_html(const std::vector<HighlightRow>& rows, const std::string& out_path) {
  for (const auto& row : rows) {
    for (const auto& t : row.tracks) {
      if (t.scores.size() != row.words.size()) {
        throw ValidationError("render_html: track " + t.label + " of " + row.id +
                              " has wrong score count");
      }
      for (double v : t.scores) {
        if (v < 0.0 || v > 1.0) {
          throw ValidationError("render_html: scores must be normalized to [0,1]");
        }
      }
    }
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write html file: " + out_path);
  out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      << "<title>stylistic word highlights</title>\n"
      << "<style>\n"
      << "body { font-family: sans-serif; margin: 2em; }\n"
      << ".sentence { margin: 0.6em 0; line-height: 1.8; }\n"
      << ".word { padding: 0.1em 0.15em; border-radius: 0.2em; }\n"
      << ".legend span { padding: 0.2em 0.6em; margin-right: 0.8em; border-radius: 0.2em; }\n"
      << ".rowid { color: #888; font-size: 0.8em; margin-right: 0.6em; }\n"
      << "</style>\n</head>\n<body>\n";

  // legend from the first row's tracks
  if (!rows.empty()) {
    out << "<div class=\"legend\">\n";
    for (const auto& t : rows.front().tracks) {
      out << "<span style=\"background-color:" << rgba(t.color, 0.5) << "\">"
          << escape(t.label) << "</span>";
    }
    out << "\n</div>\n";
  }

  out << "<div class=\"sentences\">\n";
  for (const auto& row : rows) {
    for (const auto& t : row.tracks) {
      out << "<div class=\"sentence\"><span class=\"rowid\">" << escape(row.id) << " ["
          << escape(t.label) << "]</span>";
      for (std::size_t i = 0; i < row.words.size(); ++i) {
        out << " <span class=\"word\" style=\"background-color:"
            << rgba(t.color, t.scores[i]) << "\">" << escape(row.words[i]) << "</span>";
      }
      out << "</div>\n";
    }
  }
  out << "</div>\n</body>\n</html>\n";
  if (!out) throw IoError("html write failed: " + out_path);
}

}  // namespace stylex
