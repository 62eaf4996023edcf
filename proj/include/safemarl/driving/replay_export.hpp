/*
 * Copyright 2026 The safemarl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Episode replay as CSV: step,agent,x,y,heading,speed,action,r,c,events.
// Step 0 rows hold the reset state with empty action and zero r/c; events is
// a '|'-separated list of collision, off_road, finished.

#pragma once

#include "safemarl/driving/scenario.hpp"

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace safemarl::driving {

struct ReplayRow {
  std::size_t step = 0;
  std::size_t agent = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  std::string action;
  double r = 0.0;
  double c = 0.0;
  std::string events;
};

class EpisodeRecorder {
 public:
  void record_reset(const ScenarioState& scn) {
    for (std::size_t i = 0; i < 2; ++i) push(scn, i, "", 0.0, 0.0, "");
  }

  void record_step(const ScenarioState& scn, const std::string& action1, const std::string& action2,
                   const StepOutcome& out) {
    push(scn, 0, action1, out.r1, out.c1, events(out.collision1, out.off_road1, out.finished1));
    push(scn, 1, action2, out.r2, out.c2, events(out.collision2, out.off_road2, out.finished2));
  }

  [[nodiscard]] const std::vector<ReplayRow>& rows() const { return rows_; }

  void write_csv(std::ostream& out) const {
    out << "step,agent,x,y,heading,speed,action,r,c,events\n";
    char buf[256];
    for (const auto& r : rows_) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%.6f,", r.step, r.agent, r.x, r.y, r.heading, r.speed);
      out << buf << r.action;
      std::snprintf(buf, sizeof buf, ",%.6g,%.6g,", r.r, r.c);
      out << buf << r.events << "\n";
    }
  }

 private:
  static std::string events(bool collision, bool off_road, bool finished) {
    std::string e;
    auto add = [&](bool flag, const char* name) {
      if (!flag) return;
      if (!e.empty()) e += "|";
      e += name;
    };
    add(collision, "collision");
    add(off_road, "off_road");
    add(finished, "finished");
    return e;
  }

  void push(const ScenarioState& scn, std::size_t agent, std::string action, double r, double c, std::string ev) {
    const VehicleState& v = scn.vehicles[agent];
    rows_.push_back({scn.steps, agent, v.x, v.y, v.heading, v.speed, std::move(action), r, c, std::move(ev)});
  }

  std::vector<ReplayRow> rows_;
};

}  // namespace safemarl::driving
