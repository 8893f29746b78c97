#pragma once

// Simulated smart parking lot: the provider side of the demo. Library API
// plus an HTTP front end (ParkingServer).

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

namespace esp::parking {

enum class ServiceKind { tirepressure, charging, carwash };

std::string_view to_string(ServiceKind kind);
std::optional<ServiceKind> service_kind_from_string(std::string_view s);

struct Spot {
  std::string spot_id;  // row letter + column number, e.g. "B3"
  int row = 0;
  int col = 0;
  std::set<ServiceKind> features;
  bool occupied = false;
  std::optional<std::string> active_reservation;
  std::set<ServiceKind> booked_services;

  bool operator==(const Spot&) const = default;
};

struct Reservation {
  std::string reservation_nr;  // "RSV-" + zero-padded counter
  std::string spot_id;
  std::string operator_id;
  int max_minutes = 0;
  std::int64_t created_at_ms = 0;

  bool operator==(const Reservation&) const = default;
};

struct LotState {
  std::vector<Spot> spots;
  std::vector<Reservation> reservations;
  std::uint64_t seed_version = 0;

  bool operator==(const LotState&) const = default;
};

struct Availability {
  bool available = false;
  std::optional<std::string> spot_id;
};

struct Confirmation {
  std::string token;
  std::string spot_id;
  std::string reservation_nr;
  ServiceKind kind;
};

enum class ParkingErrorKind {
  unknown_spot,
  spot_taken,
  invalid_duration,
  unknown_reservation,
  feature_unsupported,
  reservation_mismatch,
  bad_request,
};

std::string_view to_string(ParkingErrorKind kind);

class ParkingError : public std::runtime_error {
 public:
  ParkingError(ParkingErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ParkingErrorKind kind() const { return kind_; }
  int http_status() const;

 private:
  ParkingErrorKind kind_;
};

inline constexpr int kRows = 3;
inline constexpr int kCols = 4;
inline constexpr std::string_view kAnySpot = "any";

/// Lot state behind one mutex; booking is an atomic check-and-reserve.
class ParkingLot {
 public:
  explicit ParkingLot(std::uint64_t seed = 0);

  /// `parking_id` may be "any" (or empty): then the free spot with the most
  /// features is chosen, ties broken by grid order.
  Availability check_availability(std::string_view parking_id,
                                  std::string_view operator_id) const;
  Reservation book_spot(std::string_view parking_id,
                        std::string_view operator_id, int max_minutes);
  Confirmation book_feature(ServiceKind kind, std::string_view parking_id,
                            std::string_view reservation_nr, int max_minutes);
  std::vector<std::string> navigation(std::string_view parking_id) const;

  void set_occupied(std::string_view parking_id, bool occupied);

  LotState get_state() const;
  LotState reset(std::uint64_t seed);

 private:
  Spot& spot_locked(std::string_view id);
  const Spot& spot_locked(std::string_view id) const;

  mutable std::mutex mu_;
  LotState state_;
  std::uint64_t next_reservation_ = 1;  // never rewound by reset()
};

nlohmann::json to_json(const LotState& state);
nlohmann::json to_json(const Reservation& r);

/// HTTP front end:
///   GET  /parking/{id}/e-available?operator=...
///   POST /parking/{id}/book             {"operator_id","max_minutes"}
///   POST /parking/{id}/services/{kind}  {"reservation_nr","max_minutes"}
///   GET  /parking/{id}/navigation
///   GET  /lot
///   POST /lot/reset                     {"seed"}
class ParkingServer {
 public:
  explicit ParkingServer(ParkingLot& lot);
  ~ParkingServer();

  ParkingServer(const ParkingServer&) = delete;
  ParkingServer& operator=(const ParkingServer&) = delete;

  /// Starts listening on a background thread. Port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);

  std::string base_url() const;
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace esp::parking
