#pragma once

// Direct transcription of the pair scores with plain vectors.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Quad {
  Vec fr, ff, sr, sf;
};

// face_more: the face was manipulated more (speech anchors).
inline double score1(const Quad& m, bool face_more) {
  return face_more ? dist(m.sr, m.fr) - dist(m.sr, m.ff) : dist(m.fr, m.sr) - dist(m.fr, m.sf);
}

inline double score2(const Quad& e, bool face_more) {
  return face_more ? dist(e.sr, e.sf) - dist(e.fr, e.ff) : dist(e.fr, e.ff) - dist(e.sr, e.sf);
}

inline double hinge(double L, double m) { return L + m > 0.0 ? L + m : 0.0; }

}  // namespace oracle
