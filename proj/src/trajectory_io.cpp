#include <elastodiff/errors.hpp>
#include <elastodiff/trajectory_io.hpp>

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace elastodiff {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'E', 'D', 'T', 'R', 'J', '1', '\n', '\0'};

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void write_trajectory(const std::string& path, const Scene& scene,
                      const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  json header = {{"version", 1},
                 {"n_steps", scene.n_steps},
                 {"n_dofs", scene.space.n_dofs()},
                 {"dt", scene.dt},
                 {"bdf_order", scene.bdf_order},
                 {"fields", json::array({"u", "v"})}};
  const std::string hs = header.dump();
  os.write(kMagic, 8);
  write_u64(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (size_t i = 0; i < traj.u.size(); ++i) {
    os.write(reinterpret_cast<const char*>(traj.u[i].data()),
             static_cast<std::streamsize>(sizeof(double) * traj.u[i].size()));
    os.write(reinterpret_cast<const char*>(traj.v[i].data()),
             static_cast<std::streamsize>(sizeof(double) * traj.v[i].size()));
  }
  if (!os) throw Error("write failed: " + path);
}

TrajectoryFile read_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw SchemaError(path + ": not a trajectory file");
  const uint64_t hlen = read_u64(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  const json header = json::parse(hs);

  TrajectoryFile out;
  out.n_steps = header.at("n_steps").get<int>();
  out.n_dofs = header.at("n_dofs").get<int>();
  out.dt = header.at("dt").get<double>();
  out.bdf_order = header.value("bdf_order", 1);
  out.u.resize(out.n_steps + 1, VecX(out.n_dofs));
  out.v.resize(out.n_steps + 1, VecX(out.n_dofs));
  for (int i = 0; i <= out.n_steps; ++i) {
    is.read(reinterpret_cast<char*>(out.u[i].data()),
            static_cast<std::streamsize>(sizeof(double) * out.n_dofs));
    is.read(reinterpret_cast<char*>(out.v[i].data()),
            static_cast<std::streamsize>(sizeof(double) * out.n_dofs));
  }
  if (!is) throw SchemaError(path + ": truncated payload");
  return out;
}

void write_step_summary_csv(const std::string& path, const Scene& scene,
                            const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "step,time,newton_iterations,residual,min_distance,min_detF\n";
  for (int i = 1; i <= scene.n_steps; ++i) {
    const auto& s = traj.stats[i];
    os << i << ',' << i * scene.dt << ',' << s.iterations << ',' << s.residual << ','
       << s.min_distance << ',' << s.min_detF << '\n';
  }
}

}  // namespace elastodiff
