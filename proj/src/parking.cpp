#include "esp/parking.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace esp::parking {

std::string_view to_string(ServiceKind kind) {
  switch (kind) {
    case ServiceKind::tirepressure: return "tirepressure";
    case ServiceKind::charging: return "charging";
    case ServiceKind::carwash: return "carwash";
  }
  return "?";
}

std::optional<ServiceKind> service_kind_from_string(std::string_view s) {
  if (s == "tirepressure") return ServiceKind::tirepressure;
  if (s == "charging") return ServiceKind::charging;
  if (s == "carwash") return ServiceKind::carwash;
  return std::nullopt;
}

std::string_view to_string(ParkingErrorKind kind) {
  switch (kind) {
    case ParkingErrorKind::unknown_spot: return "UnknownSpot";
    case ParkingErrorKind::spot_taken: return "SpotTaken";
    case ParkingErrorKind::invalid_duration: return "InvalidDuration";
    case ParkingErrorKind::unknown_reservation: return "UnknownReservation";
    case ParkingErrorKind::feature_unsupported: return "FeatureUnsupported";
    case ParkingErrorKind::reservation_mismatch: return "ReservationMismatch";
    case ParkingErrorKind::bad_request: return "BadRequest";
  }
  return "?";
}

int ParkingError::http_status() const {
  switch (kind_) {
    case ParkingErrorKind::unknown_spot:
    case ParkingErrorKind::unknown_reservation: return 404;
    case ParkingErrorKind::spot_taken:
    case ParkingErrorKind::reservation_mismatch: return 409;
    case ParkingErrorKind::feature_unsupported: return 422;
    case ParkingErrorKind::invalid_duration:
    case ParkingErrorKind::bad_request: return 400;
  }
  return 400;
}

namespace {

std::string spot_name(int row, int col) {
  return std::string(1, static_cast<char>('A' + row)) + std::to_string(col + 1);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool is_any(std::string_view id) { return id.empty() || id == kAnySpot; }

bool free_spot(const Spot& s) {
  return !s.occupied && !s.active_reservation.has_value();
}

}  // namespace

ParkingLot::ParkingLot(std::uint64_t seed) { reset(seed); }

LotState ParkingLot::reset(std::uint64_t seed) {
  // Feature subsets rotate over the grid; every feature lands on 6 spots.
  static const std::array<std::set<ServiceKind>, 4> kPattern = {{
      {ServiceKind::tirepressure, ServiceKind::charging, ServiceKind::carwash},
      {ServiceKind::tirepressure},
      {ServiceKind::charging},
      {ServiceKind::carwash},
  }};
  std::lock_guard lock(mu_);
  state_ = LotState{};
  state_.seed_version = seed;
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols; ++c) {
      Spot s;
      s.spot_id = spot_name(r, c);
      s.row = r;
      s.col = c;
      std::size_t index = static_cast<std::size_t>(r * kCols + c);
      s.features = kPattern[(index + seed) % kPattern.size()];
      state_.spots.push_back(std::move(s));
    }
  }
  return state_;
}

Spot& ParkingLot::spot_locked(std::string_view id) {
  auto it = std::find_if(state_.spots.begin(), state_.spots.end(),
                         [&](const Spot& s) { return s.spot_id == id; });
  if (it == state_.spots.end()) {
    throw ParkingError(ParkingErrorKind::unknown_spot,
                       "unknown spot '" + std::string(id) + "'");
  }
  return *it;
}

const Spot& ParkingLot::spot_locked(std::string_view id) const {
  return const_cast<ParkingLot*>(this)->spot_locked(id);
}

Availability ParkingLot::check_availability(
    std::string_view parking_id, std::string_view /*operator_id*/) const {
  std::lock_guard lock(mu_);
  if (!is_any(parking_id)) {
    const Spot& s = spot_locked(parking_id);
    return {free_spot(s), s.spot_id};
  }
  const Spot* best = nullptr;
  for (const auto& s : state_.spots) {
    if (!free_spot(s)) continue;
    if (best == nullptr || s.features.size() > best->features.size()) best = &s;
  }
  if (best == nullptr) return {false, std::nullopt};
  return {true, best->spot_id};
}

Reservation ParkingLot::book_spot(std::string_view parking_id,
                                  std::string_view operator_id,
                                  int max_minutes) {
  if (max_minutes <= 0) {
    throw ParkingError(ParkingErrorKind::invalid_duration,
                       "max_minutes must be positive");
  }
  std::lock_guard lock(mu_);
  Spot& spot = spot_locked(parking_id);
  if (!free_spot(spot)) {
    throw ParkingError(ParkingErrorKind::spot_taken,
                       "spot " + spot.spot_id + " is not available");
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "RSV-%04llu",
                static_cast<unsigned long long>(next_reservation_++));
  Reservation r{buf, spot.spot_id, std::string(operator_id), max_minutes,
                now_ms()};
  spot.active_reservation = r.reservation_nr;
  state_.reservations.push_back(r);
  return r;
}

Confirmation ParkingLot::book_feature(ServiceKind kind,
                                      std::string_view parking_id,
                                      std::string_view reservation_nr,
                                      int max_minutes) {
  if (max_minutes <= 0) {
    throw ParkingError(ParkingErrorKind::invalid_duration,
                       "max_minutes must be positive");
  }
  std::lock_guard lock(mu_);
  Spot& spot = spot_locked(parking_id);
  auto it = std::find_if(
      state_.reservations.begin(), state_.reservations.end(),
      [&](const Reservation& r) { return r.reservation_nr == reservation_nr; });
  if (it == state_.reservations.end()) {
    throw ParkingError(ParkingErrorKind::unknown_reservation,
                       "unknown reservation '" + std::string(reservation_nr) +
                           "'");
  }
  if (it->spot_id != spot.spot_id ||
      spot.active_reservation != it->reservation_nr) {
    throw ParkingError(ParkingErrorKind::reservation_mismatch,
                       "reservation " + it->reservation_nr +
                           " is not active on spot " + spot.spot_id);
  }
  if (!spot.features.contains(kind)) {
    throw ParkingError(ParkingErrorKind::feature_unsupported,
                       "spot " + spot.spot_id + " has no " +
                           std::string(to_string(kind)));
  }
  spot.booked_services.insert(kind);
  return {"CNF-" + it->reservation_nr.substr(4) + "-" +
              std::string(to_string(kind)),
          spot.spot_id, it->reservation_nr, kind};
}

std::vector<std::string> ParkingLot::navigation(
    std::string_view parking_id) const {
  std::lock_guard lock(mu_);
  const Spot& spot = spot_locked(parking_id);
  // The entrance faces A1: follow the aisle along the columns, then turn
  // into the target row.
  std::vector<std::string> steps;
  for (int c = 1; c <= spot.col; ++c) {
    steps.push_back("continue along the aisle to column " +
                    std::to_string(c + 1));
  }
  for (int r = 1; r <= spot.row; ++r) {
    steps.push_back("move into row " +
                    std::string(1, static_cast<char>('A' + r)));
  }
  steps.push_back("proceed to " + spot.spot_id);
  return steps;
}

void ParkingLot::set_occupied(std::string_view parking_id, bool occupied) {
  std::lock_guard lock(mu_);
  spot_locked(parking_id).occupied = occupied;
}

LotState ParkingLot::get_state() const {
  std::lock_guard lock(mu_);
  return state_;
}

nlohmann::json to_json(const Reservation& r) {
  return {{"reservation_nr", r.reservation_nr},
          {"spot_id", r.spot_id},
          {"operator_id", r.operator_id},
          {"max_minutes", r.max_minutes},
          {"created_at", r.created_at_ms}};
}

nlohmann::json to_json(const LotState& state) {
  nlohmann::json spots = nlohmann::json::array();
  for (const auto& s : state.spots) {
    nlohmann::json features = nlohmann::json::array();
    for (auto f : s.features) features.push_back(to_string(f));
    nlohmann::json booked = nlohmann::json::array();
    for (auto f : s.booked_services) booked.push_back(to_string(f));
    spots.push_back({{"spot_id", s.spot_id},
                     {"row", s.row},
                     {"col", s.col},
                     {"features", features},
                     {"occupied", s.occupied},
                     {"active_reservation",
                      s.active_reservation ? nlohmann::json(*s.active_reservation)
                                           : nlohmann::json(nullptr)},
                     {"booked_services", booked}});
  }
  nlohmann::json reservations = nlohmann::json::array();
  for (const auto& r : state.reservations) reservations.push_back(to_json(r));
  return {{"rows", kRows},
          {"cols", kCols},
          {"seed_version", state.seed_version},
          {"spots", spots},
          {"reservations", reservations}};
}

}  // namespace esp::parking
