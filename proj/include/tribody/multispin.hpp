#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "tribody/disorder.hpp"
#include "tribody/lattice.hpp"
#include "tribody/mc.hpp"

namespace tribody {

// Parallel tempering of many disorder samples at once. Sample l occupies
// bit l of every lane word (bit set = spin -1), so one bitwise update of a
// site advances all samples. Each sample performs its own sequential
// Metropolis sweeps and replica exchanges on the shared temperature ladder;
// samples never interact. Random bits come from one generator per ladder
// slot (per 64-bit word of it), not from a private stream per replica.
//
// lane_width is 64 or 512; the two widths consume random numbers
// differently and are not interchangeable for reproducibility.
class MultiSpinSimulation {
 public:
  MultiSpinSimulation(const Lattice& lat, std::vector<DisorderRealization> lanes, Schedule schedule,
                      int lane_width = 64);
  ~MultiSpinSimulation();
  MultiSpinSimulation(MultiSpinSimulation&&) noexcept;
  MultiSpinSimulation& operator=(MultiSpinSimulation&&) noexcept;

  int lane_width() const noexcept;
  int num_lanes() const noexcept;
  int num_temperatures() const noexcept;
  const Schedule& schedule() const noexcept;
  const DisorderRealization& disorder(int lane) const;

  void advance(std::uint64_t sweeps);
  void run_to_end();
  bool finished() const noexcept;
  std::uint64_t sweeps_done() const noexcept;

  /// Spins of one lane at (set, temperature index), as +1/-1.
  SpinConfiguration configuration(int lane, int set, int temp_index) const;
  std::int64_t energy(int lane, int set, int temp_index) const;

  /// Bin means for the lane; bin standard errors are not tracked and are 0.
  SimulationResult result(int lane) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static MultiSpinSimulation restore(const std::filesystem::path& path, const Lattice& lat,
                                     std::vector<DisorderRealization> lanes, Schedule schedule,
                                     int lane_width = 64);

  class Engine;

 private:
  explicit MultiSpinSimulation(std::unique_ptr<Engine> e);
  std::unique_ptr<Engine> engine_;
};

}  // namespace tribody
