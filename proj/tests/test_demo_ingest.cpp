#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "pbrs/demo_ingest.hpp"

using namespace pbrs;

namespace {

std::string demo_csv(int frames) {
  std::ostringstream os;
  os << "# test track\nframe,part,x,y\n";
  for (int f = 0; f < frames; ++f) {
    const double s = std::sin(f * 0.4), c = std::cos(f * 0.4);
    os << f << ",r_knee," << 10 * s << "," << -40 + c << "\n";
    os << f << ",l_knee," << -10 * s << "," << -40 - c << "\n";
    os << f << ",r_foot," << 30 * s << "," << -80 + c << "\n";
    os << f << ",l_foot," << -30 * s << "," << -80 - c << "\n";
  }
  return os.str();
}

DemoTrack parse(const std::string& text) {
  std::istringstream in(text);
  return parse_demo(in);
}

template <typename E>
std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(DemoIngest, HappyPath) {
  const DemoTrack t = parse(demo_csv(16));
  EXPECT_EQ(t.frames.size(), 16u);
  EXPECT_TRUE(t.cyclic);
  EXPECT_EQ(t.frames_per_half_step, 4);
  EXPECT_EQ(t.comments.size(), 1u);
  for (std::size_t i = 1; i < t.frames.size(); ++i)
    EXPECT_LT(t.frames[i - 1].frame_index, t.frames[i].frame_index);
}

TEST(DemoIngest, RowsInAnyOrderAndColumnsPermuted) {
  const std::string text =
      "part,y,x,frame\n"
      "l_foot,1,2,1\nr_knee,1,2,1\nl_knee,1,2,1\nr_foot,1,2,1\n"
      "l_foot,1,2,0\nr_knee,3,4,0\nl_knee,1,2,0\nr_foot,1,2,0\n";
  std::istringstream in(text);
  EXPECT_THROW(parse_demo(in), InsufficientDataError);
  std::string more = "part,y,x,frame\n";
  for (int f = 9; f >= 0; --f)
    for (const char* p : {"l_foot", "r_foot", "l_knee", "r_knee"})
      more += std::string(p) + ",1," + std::to_string(f) + "," + std::to_string(f) + "\n";
  const DemoTrack t = parse(more);
  ASSERT_EQ(t.frames.size(), 10u);
  EXPECT_EQ(t.frames[3].frame_index, 3);
  EXPECT_EQ(t.frames[3].r_knee(), Vec2(3.0, 1.0));
}

TEST(DemoIngest, DuplicateFrameCitesRow) {
  std::string text = demo_csv(8);
  text += "3,r_knee,0,0\n";
  const std::string msg = error_of<DataError>(text);
  EXPECT_NE(msg.find("row 35"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(DemoIngest, NanCitesRowAndColumn) {
  std::string text = "frame,part,x,y\n";
  for (int f = 0; f < 8; ++f)
    for (const char* p : {"r_knee", "l_knee", "r_foot", "l_foot"})
      text += std::to_string(f) + "," + p + ",1," + (f == 2 && std::string(p) == "l_foot" ? "NaN" : "2") + "\n";
  const std::string msg = error_of<DataError>(text);
  EXPECT_NE(msg.find("row 13"), std::string::npos) << msg;
  EXPECT_NE(msg.find("l_foot_y"), std::string::npos) << msg;
}

TEST(DemoIngest, MissingColumnNamed) {
  const std::string msg = error_of<SchemaError>("frame,part,x\n0,r_knee,1\n");
  EXPECT_NE(msg.find("'y'"), std::string::npos) << msg;
}

TEST(DemoIngest, TooFewFrames) {
  EXPECT_THROW(parse(demo_csv(7)), InsufficientDataError);
  EXPECT_NO_THROW(parse(demo_csv(8)));
}

TEST(DemoIngest, MissingPartAndUnknownPart) {
  std::string text = demo_csv(8);
  text.erase(text.find("5,l_foot"), text.find('\n', text.find("5,l_foot")) - text.find("5,l_foot") + 1);
  EXPECT_NE(error_of<DataError>(text).find("missing part l_foot"), std::string::npos);
  EXPECT_NE(error_of<DataError>(demo_csv(8) + "9,head,0,0\n").find("unknown part"), std::string::npos);
}

TEST(DemoIngest, CadenceComment) {
  const DemoTrack t = parse("# frames_per_half_step=12\n" + demo_csv(8));
  EXPECT_EQ(t.frames_per_half_step, 12);
}

TEST(DemoIngest, RoundTripIsBitIdentical) {
  DemoTrack t = parse(demo_csv(16));
  t = normalize(t, 0.9);
  std::ostringstream os;
  write_demo(t, os);
  const DemoTrack back = parse(os.str());
  EXPECT_EQ(back.frames, t.frames);
  std::ostringstream os2;
  write_demo(back, os2);
  EXPECT_EQ(os2.str(), os.str());
}

TEST(DemoIngest, NormalizeScale) {
  std::string text = "frame,part,x,y\n";
  for (int f = 0; f < 8; ++f)
    for (const char* p : {"r_knee", "l_knee", "r_foot", "l_foot"})
      text += std::to_string(f) + "," + p + "," + (f == 0 && std::string(p) == "r_foot" ? "60,-80" : "10,-50") + "\n";
  const DemoTrack t = parse(text);
  EXPECT_DOUBLE_EQ(max_foot_distance(t), 100.0);
  const DemoTrack n = normalize(t, 0.9);
  EXPECT_NEAR(n.scale, 0.009, 1e-15);
  EXPECT_NEAR(max_foot_distance(n), 0.9, 1e-15);
  EXPECT_NEAR(n.frames[0].r_foot().x(), 0.54, 1e-15);
}

TEST(DemoIngest, NormalizeIdempotentAndFixedPoint) {
  const DemoTrack once = normalize(parse(demo_csv(16)), 0.9);
  EXPECT_EQ(normalize(once, 0.9), once);
  EXPECT_EQ(normalize(normalize(once, 0.9), 0.9).frames, once.frames);
}

TEST(DemoIngest, NormalizePreservesRatios) {
  const DemoTrack t = parse(demo_csv(16));
  const DemoTrack n = normalize(t, 0.9);
  const double a = (t.frames[1].r_foot() - t.frames[5].l_knee()).norm();
  const double b = (t.frames[9].l_foot() - t.frames[2].r_knee()).norm();
  const double an = (n.frames[1].r_foot() - n.frames[5].l_knee()).norm();
  const double bn = (n.frames[9].l_foot() - n.frames[2].r_knee()).norm();
  EXPECT_NEAR(a / b, an / bn, 1e-12);
}

TEST(DemoIngest, NormalizeRejectsDegenerateAndBadLength) {
  std::string text = "frame,part,x,y\n";
  for (int f = 0; f < 8; ++f)
    for (const char* p : {"r_knee", "l_knee", "r_foot", "l_foot"})
      text += std::to_string(f) + "," + p + ",0,0\n";
  EXPECT_THROW(normalize(parse(text), 0.9), DataError);
  EXPECT_THROW(normalize(parse(demo_csv(8)), 0.0), ConfigError);
}

TEST(DemoIngest, PhaseLookupWraps) {
  const DemoTrack t = parse(demo_csv(12));
  const auto n = static_cast<std::int64_t>(t.frames.size());
  EXPECT_EQ(phase_lookup(t, 0), t.frames[0]);
  EXPECT_EQ(phase_lookup(t, n), t.frames[0]);
  EXPECT_EQ(phase_lookup(t, 3 * n + 5), t.frames[5]);
  for (std::int64_t k = 0; k < 100; ++k) EXPECT_EQ(phase_lookup(t, k), phase_lookup(t, k + n));
}

TEST(DemoIngest, BundledTracksLoad) {
  for (const char* name : {"human", "cartoon", "game"}) {
    const DemoTrack t = load_demo(std::string(PBRS_DATA_DIR) + "/demos/" + name + ".csv");
    EXPECT_GE(t.frames.size(), kMinDemoFrames) << name;
    EXPECT_EQ(t.frames.size() % 2, 0u) << name;
    EXPECT_EQ(static_cast<int>(t.frames.size()), 2 * t.frames_per_half_step) << name;
    const DemoTrack n = normalize(t, 0.9);
    EXPECT_NEAR(max_foot_distance(n), 0.9, 1e-12) << name;
  }
}

TEST(DemoIngest, MissingFileIsDataError) {
  EXPECT_THROW(load_demo("/nonexistent/demo.csv"), DataError);
}
