#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmabm/errors.hpp"
#include "rmabm/heuristic.hpp"
#include "rmabm/metrics.hpp"
#include "rmabm/params.hpp"
#include "rmabm/rng.hpp"
#include "rmabm/types.hpp"

namespace rmabm {

inline constexpr int kNoFirm = -1;
inline constexpr double kMoneyEps = 1e-12;

// One bank loan: equal principal instalments plus interest on the remaining
// principal, paid once per step at settlement.
struct Loan {
  double principal_instalment = 0.0;
  int steps_left = 0;
  double remaining_principal() const { return principal_instalment * steps_left; }
};

struct CFirmState {
  int id = 0;
  double price = 1.0;          // P_i
  double target_output = 0.0;  // Y*
  double output = 0.0;         // Y, produced this step
  double demand = 0.0;         // Y_d, all attempted purchases routed here
  double sales = 0.0;          // Y_s
  double assets = 0.0;         // A_i, signed
  double capital = 0.0;        // K_i
  int workforce = 0;           // N_i
  std::vector<Loan> loans;
  double profit = 0.0;         // pi_i, real terms, last settled step
  bool bankrupt_flag = false;  // set when the firm is replaced at settlement

  // step scratch
  double revenue = 0.0;          // nominal consumption revenue this step
  double remaining_stock = 0.0;  // shelf during the consumption market
  double investment_spend = 0.0;
};

struct KFirmState {
  int id = 0;
  double price = 1.0;     // per capital unit
  double output = 0.0;    // produced this step
  double inventory = 0.0;
  int workforce = 0;
  double assets = 0.0;
  double target_output = 0.0;
  double demand = 0.0;    // units requested this step
  double sales = 0.0;     // units sold this step
  std::vector<Loan> loans;

  // step scratch
  double available = 0.0;  // inventory at capital-market open
  double revenue = 0.0;
};

struct HouseholdState {
  int id = 0;
  bool is_capitalist = false;
  int employer = kNoFirm;  // unified firm index: C in [0,F_c), K in [F_c,F_c+F_k)
  double income = 0.0;     // this step's wage, or pending dividends for capitalists
  double deposits = 0.0;
};

struct BankState {
  double total_deposits = 0.0;
  double outstanding_loans = 0.0;
  double equity = 0.0;
};

// Per-firm snapshot taken at settlement, before bankrupt slots are replaced
// by entrants. This is what metrics frames report.
struct StepRecord {
  std::vector<double> price, sales, output, demand, profit, assets, revenue;
  std::vector<std::uint8_t> bankrupt;
  int employment = 0;

  void reset(std::size_t n) {
    price.assign(n, 0.0);
    sales.assign(n, 0.0);
    output.assign(n, 0.0);
    demand.assign(n, 0.0);
    profit.assign(n, 0.0);
    assets.assign(n, 0.0);
    revenue.assign(n, 0.0);
    bankrupt.assign(n, 0);
    employment = 0;
  }
};

struct EconomyState {
  ModelParams params;
  long long step = 0;  // t
  std::vector<HouseholdState> households;  // workers first, then capitalists
  std::vector<CFirmState> cfirms;
  std::vector<KFirmState> kfirms;
  BankState bank;
  double avg_price = 1.0;          // P_t, sales-weighted
  double avg_kprice = 1.0;
  double base_price = 1.0;         // P_base; price_index = avg_price / base_price
  double price_index = 1.0;
  double nominal_gdp = 0.0;
  double real_gdp = 0.0;
  double consumption_boost = 1.0;  // multiplies household budgets (shock hook)
  Rng rng;

  // step bookkeeping
  StepRecord record;
  double step_spending = 0.0;
  double step_loans_granted = 0.0;
  double step_principal_repaid = 0.0;
  double step_writeoffs = 0.0;

  // scratch buffers
  std::vector<int> visit_buf;
  std::vector<std::pair<double, int>> price_order_buf;
  std::vector<int> posting_buf;
  std::vector<int> vacancy_buf;
  std::vector<std::vector<int>> employee_buf;

  int num_workers() const { return params.num_workers; }

  // Rebase the price index so that the current average price becomes the
  // base. The harness calls this at the end of the burn-in window.
  void rebase_price_index() {
    base_price = avg_price;
    price_index = 1.0;
  }
};

namespace detail {

// Initial scale chosen so that firms start near a consistent operating
// point: C-sector labour demand ~85% of the workforce, K-firms sized to the
// implied depreciation replacement flow.
inline double init_cfirm_target(const ModelParams& p) {
  return 0.85 * p.labour_productivity * p.num_workers / p.num_cfirms;
}

inline double init_kfirm_target(const ModelParams& p) {
  const double total_capital = p.num_cfirms * init_cfirm_target(p) / p.capital_productivity;
  return p.capital_depreciation * total_capital / p.num_kfirms;
}

inline double init_cfirm_assets(const ModelParams& p) {
  return 6.0 * p.wage * init_cfirm_target(p) / p.labour_productivity;
}

inline double init_kfirm_assets(const ModelParams& p) {
  return 6.0 * p.wage * init_kfirm_target(p) / p.labour_productivity;
}

// Unit labour cost anchors the initial price level: starting every firm at
// a price below cost would force a violent inflation-or-death transient.
inline double unit_labour_cost(const ModelParams& p) { return p.wage / p.labour_productivity; }

inline int ceil_count(double x) {
  if (x <= 0.0) return 0;
  if (x > 1e9) x = 1e9;  // keep the cast well-defined for runaway targets
  return static_cast<int>(std::ceil(x - 1e-9));
}

// Targets beyond what the entire labour force could produce are not
// actionable; planning (hiring, capital purchases, credit requests) works
// with this capped value so one runaway target cannot blow up the credit
// and capital markets.
inline double planning_target(const ModelParams& p, double target) {
  const double ceiling = p.labour_productivity * p.num_workers;
  return std::clamp(target, 0.0, ceiling);
}

// Total money in the system at a step boundary: firm assets, banked
// deposits, dividends awarded but not yet banked, and bank equity.
inline double total_money(const EconomyState& s) {
  double m = s.bank.equity;
  for (const auto& f : s.cfirms) m += f.assets;
  for (const auto& k : s.kfirms) m += k.assets;
  for (const auto& h : s.households) {
    m += h.deposits;
    if (h.is_capitalist) m += h.income;
  }
  return m;
}

// Fraction of the capital gap closed per step. Buying the whole gap at once
// makes aggregate investment a spike train (the gap is a rectified noisy
// signal), which then dominates GDP volatility.
inline constexpr double kCapitalGapClosure = 0.25;

// Wage bills of cash kept liquid before buying capital.
inline constexpr double kPayrollBufferSteps = 1.0;

// Desired capital purchase for one C-firm: replace depreciation plus part of
// the gap between desired capital ceil(Y*/alpha_K) and the current stock.
inline double capital_purchase_target(const CFirmState& f, const ModelParams& p) {
  const double desired =
      std::ceil(planning_target(p, f.target_output) / p.capital_productivity - 1e-9);
  const double gap = std::max(0.0, desired - f.capital);
  return p.capital_depreciation * f.capital + kCapitalGapClosure * gap;
}

inline void grant_loan(EconomyState& s, double principal, std::vector<Loan>& loans, double& assets) {
  if (principal <= 0.0) return;
  assets += principal;
  loans.push_back(Loan{principal / s.params.loan_duration, s.params.loan_duration});
  s.bank.outstanding_loans += principal;
  s.step_loans_granted += principal;
}

// Pays this step's instalments on every loan. Returns the total paid
// (principal + interest); principal reduces bank exposure, interest accrues
// to bank equity.
inline double pay_instalments(EconomyState& s, std::vector<Loan>& loans, double& assets) {
  double paid = 0.0;
  for (auto& loan : loans) {
    const double interest = s.params.interest_rate * loan.remaining_principal();
    const double instalment = loan.principal_instalment + interest;
    assets -= instalment;
    paid += instalment;
    s.bank.outstanding_loans -= loan.principal_instalment;
    s.bank.equity += interest;
    s.step_principal_repaid += loan.principal_instalment;
    loan.steps_left -= 1;
  }
  std::erase_if(loans, [](const Loan& l) { return l.steps_left <= 0; });
  return paid;
}

}  // namespace detail

inline EconomyState init_economy(const ModelParams& params, std::uint64_t seed) {
  params.validate();
  EconomyState s;
  s.params = params;
  s.rng.reseed(seed);

  const int total_households = params.num_workers + params.num_capitalists;
  s.households.resize(total_households);
  for (int i = 0; i < total_households; ++i) {
    auto& h = s.households[i];
    h.id = i;
    h.is_capitalist = i >= params.num_workers;
    h.employer = kNoFirm;
    h.income = 0.0;
    h.deposits = 2.0 * params.wage;
  }

  // Firms start with output == demand == target so that the first heuristic
  // call keeps the status quo, and with a few steps of wage bill in cash.
  // Initial prices sit at unit labour cost times a small jittered markup:
  // the jitter matters because with exactly uniform prices the adjustment
  // rule can never fire its raise branch (nobody is strictly below average),
  // which would freeze the price level permanently.
  const double unit_cost = detail::unit_labour_cost(params);
  const double c_target = detail::init_cfirm_target(params);
  s.cfirms.resize(params.num_cfirms);
  double price_sum = 0.0;
  for (int i = 0; i < params.num_cfirms; ++i) {
    auto& f = s.cfirms[i];
    f.id = i;
    f.price = unit_cost * s.rng.uniform(1.0, 1.1);
    price_sum += f.price;
    f.target_output = c_target;
    f.output = c_target;
    f.demand = c_target;
    f.sales = c_target;
    f.capital = c_target / params.capital_productivity;
    f.assets = detail::init_cfirm_assets(params);
    f.workforce = 0;
  }

  const double k_target = detail::init_kfirm_target(params);
  s.kfirms.resize(params.num_kfirms);
  double k_price_sum = 0.0;
  for (int i = 0; i < params.num_kfirms; ++i) {
    auto& k = s.kfirms[i];
    k.id = i;
    k.price = unit_cost * s.rng.uniform(1.0, 1.1);
    k_price_sum += k.price;
    k.target_output = k_target;
    k.output = k_target;
    k.inventory = 4.0 * k_target;
    k.demand = k_target;
    k.sales = k_target;
    k.available = k.inventory;
    k.assets = detail::init_kfirm_assets(params);
    k.workforce = 0;
  }

  s.bank = BankState{};
  for (const auto& h : s.households) s.bank.total_deposits += h.deposits;
  s.avg_price = price_sum / params.num_cfirms;
  s.avg_kprice = k_price_sum / params.num_kfirms;
  s.base_price = s.avg_price;  // price index starts at 1
  s.price_index = 1.0;
  s.record.reset(s.cfirms.size());
  return s;
}

// --- step phases -----------------------------------------------------------

// Phase 1: install the policies' price/target decisions on C-firms and run
// the built-in heuristic for K-firms.
inline void apply_decisions(EconomyState& s, std::span<const FirmDecision> decisions) {
  if (decisions.size() != s.cfirms.size()) {
    throw ConfigError("step_economy: expected one decision per C-firm");
  }
  for (std::size_t i = 0; i < s.cfirms.size(); ++i) {
    auto& f = s.cfirms[i];
    const auto& d = decisions[i];
    if (!(d.next_price > 0.0) || !std::isfinite(d.next_price)) {
      throw ConfigError("decision price must be positive and finite");
    }
    f.price = d.next_price;
    f.target_output = std::max(0.0, d.next_target_output);
    f.bankrupt_flag = false;
  }
  for (auto& k : s.kfirms) {
    HeuristicInputs in;
    in.price = k.price;
    in.output = k.output;
    in.target = k.target_output;
    in.firm_stock = k.available - k.demand;  // stocked units vs last step's requests
    in.price_delta = k.price - s.avg_kprice;
    const FirmDecision d =
        heuristic_decide(in, s.params.quantity_adjustment, s.params.price_adjustment_max, s.rng);
    k.price = d.next_price;
    k.target_output = d.next_target_output;
  }
}

// Phase 2: firms fire surplus workers at random and post vacancies; the
// unemployed visit z_e random posting firms and take the first open job.
inline void labour_market(EconomyState& s) {
  const auto& p = s.params;
  const int n_c = static_cast<int>(s.cfirms.size());
  const int n_k = static_cast<int>(s.kfirms.size());
  const int n_firms = n_c + n_k;

  s.vacancy_buf.assign(n_firms, 0);
  auto want_workers = [&](int fid) -> int {
    if (fid < n_c) {
      const auto& f = s.cfirms[fid];
      const double feasible = std::min(detail::planning_target(p, f.target_output),
                                       p.capital_productivity * f.capital);
      return detail::ceil_count(feasible / p.labour_productivity);
    }
    const auto& k = s.kfirms[fid - n_c];
    return detail::ceil_count(detail::planning_target(p, k.target_output) / p.labour_productivity);
  };

  s.employee_buf.resize(n_firms);
  for (auto& v : s.employee_buf) v.clear();
  for (const auto& h : s.households) {
    if (h.employer != kNoFirm) s.employee_buf[h.employer].push_back(h.id);
  }

  // Firing pass.
  for (int fid = 0; fid < n_firms; ++fid) {
    auto& staff = s.employee_buf[fid];
    const int want = want_workers(fid);
    int have = static_cast<int>(staff.size());
    while (have > want) {
      const int pick = s.rng.uniform_index(have);
      const int hid = staff[pick];
      s.households[hid].employer = kNoFirm;
      staff[pick] = staff[have - 1];
      staff.pop_back();
      --have;
    }
    if (fid < n_c) {
      s.cfirms[fid].workforce = have;
    } else {
      s.kfirms[fid - n_c].workforce = have;
    }
    s.vacancy_buf[fid] = want - have;
  }

  // Matching pass.
  s.posting_buf.clear();
  int open_positions = 0;
  for (int fid = 0; fid < n_firms; ++fid) {
    if (s.vacancy_buf[fid] > 0) {
      s.posting_buf.push_back(fid);
      open_positions += s.vacancy_buf[fid];
    }
  }
  const int n_posting = static_cast<int>(s.posting_buf.size());
  for (int hid = 0; hid < p.num_workers; ++hid) {
    auto& h = s.households[hid];
    if (h.employer != kNoFirm) continue;
    if (open_positions == 0 || n_posting == 0) continue;
    s.rng.sample_distinct(n_posting, p.labour_search_depth, s.visit_buf);
    for (int idx : s.visit_buf) {
      const int fid = s.posting_buf[idx];
      if (s.vacancy_buf[fid] > 0) {
        s.vacancy_buf[fid] -= 1;
        open_positions -= 1;
        h.employer = fid;
        if (fid < n_c) {
          s.cfirms[fid].workforce += 1;
        } else {
          s.kfirms[fid - n_c].workforce += 1;
        }
        break;
      }
    }
  }

  // Wage income for the step.
  for (int hid = 0; hid < p.num_workers; ++hid) {
    auto& h = s.households[hid];
    h.income = h.employer != kNoFirm ? p.wage : 0.0;
  }
}

// Expansion credit is limited to this multiple of current assets (net of
// outstanding debt). Committed outlays are always financed; unlimited
// credit for capital-gap chasing would leave the capital market with no
// price elasticity and the price level without an anchor.
inline constexpr double kExpansionLeverage = 0.0;

// Phase 3: firms whose planned outlays (wage bill plus planned investment)
// exceed assets borrow the shortfall. The bank grants all requests; firms
// size their own requests, borrowing freely for committed spending (wages,
// depreciation replacement) and up to the leverage limit for expansion.
inline void credit_market(EconomyState& s) {
  const auto& p = s.params;
  for (auto& f : s.cfirms) {
    const double replacement_cost = p.capital_depreciation * f.capital * s.avg_kprice;
    const double committed = p.wage * f.workforce + replacement_cost;
    double request = std::max(0.0, committed - f.assets);

    const double target_units = detail::capital_purchase_target(f, p);
    const double expansion_cost =
        std::max(0.0, target_units - p.capital_depreciation * f.capital) * s.avg_kprice;
    if (expansion_cost > 0.0) {
      double debt = 0.0;
      for (const auto& loan : f.loans) debt += loan.remaining_principal();
      const double headroom = std::max(0.0, kExpansionLeverage * f.assets - debt);
      const double cash_left = std::max(0.0, f.assets - committed);
      request += std::clamp(expansion_cost - cash_left, 0.0, headroom);
    }
    if (request > 0.0) detail::grant_loan(s, request, f.loans, f.assets);
  }
  for (auto& k : s.kfirms) {
    const double shortfall = p.wage * k.workforce - k.assets;
    if (shortfall > 0.0) detail::grant_loan(s, shortfall, k.loans, k.assets);
  }
}

// Phase 4: C-firms replace depreciated capital and fill any gap to their
// desired stock, visiting z_k random K-firms in ascending price order.
inline void capital_market(EconomyState& s) {
  const auto& p = s.params;
  const int n_k = static_cast<int>(s.kfirms.size());
  for (auto& k : s.kfirms) {
    k.available = k.inventory;
    k.demand = 0.0;
    k.sales = 0.0;
    k.revenue = 0.0;
  }
  for (auto& f : s.cfirms) {
    double need = detail::capital_purchase_target(f, p);
    f.capital *= 1.0 - p.capital_depreciation;
    f.investment_spend = 0.0;
    if (need <= 0.0) continue;

    // The step's wage bill plus a payroll buffer is committed before any
    // machine purchase; firms that spend their last cent on capital die in
    // the first demand drought.
    double spendable = f.assets - (1.0 + detail::kPayrollBufferSteps) * p.wage * f.workforce;
    if (spendable <= kMoneyEps) continue;

    s.rng.sample_distinct(n_k, p.capital_search_depth, s.visit_buf);
    s.price_order_buf.clear();
    for (int idx : s.visit_buf) s.price_order_buf.emplace_back(s.kfirms[idx].price, idx);
    // Stable sort keeps the (random) visit order among equal prices, so
    // price ties do not systematically favour low firm ids.
    std::stable_sort(s.price_order_buf.begin(), s.price_order_buf.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [price, idx] : s.price_order_buf) {
      if (need <= kMoneyEps || spendable <= kMoneyEps) break;
      auto& k = s.kfirms[idx];
      const double attempted = std::min(need, spendable / k.price);
      k.demand += attempted;
      const double bought = std::min(attempted, k.inventory);
      if (bought > 0.0) {
        const double cost = bought * k.price;
        k.inventory -= bought;
        k.sales += bought;
        k.assets += cost;
        k.revenue += cost;
        f.assets -= cost;
        spendable -= cost;
        f.capital += bought;
        f.investment_spend += cost;
        need -= bought;
      }
    }
  }
}

// Phase 5: Leontief production for C-firms; K-firm output goes to inventory.
// Consumption goods are non-storable, so the shelf is this step's output.
inline void production(EconomyState& s) {
  const auto& p = s.params;
  for (auto& f : s.cfirms) {
    f.output = std::min(p.labour_productivity * f.workforce, p.capital_productivity * f.capital);
    f.remaining_stock = f.output;
    f.demand = 0.0;
    f.sales = 0.0;
    f.revenue = 0.0;
  }
  for (auto& k : s.kfirms) {
    k.output = p.labour_productivity * k.workforce;
    k.inventory += k.output;
  }
}

// Households walk away from prices above this multiple of the average
// price instead of spending their budget on an arbitrarily small quantity.
// Without a reservation price, captive spillover demand makes a lone
// high-priced firm's revenue independent of its price, and nothing bounds
// the price it can ratchet to.
inline constexpr double kReservationPriceMultiple = 1.5;

// Relative noise on the prices households compare when ranking the firms
// they visit. With exact ranking, the cheapest shelf in every sample soaks
// up the whole budget and firms priced at the market average sell almost
// nothing; a few percent of perception noise spreads demand across the
// price band the way discrete-choice consumption models do.
inline constexpr double kPricePerceptionNoise = 0.05;

// Phase 6: search-and-matching consumption market. Each household visits
// z_c random C-firms sorted by ascending price and buys greedily until its
// budget or the shelves run out, skipping firms priced above its
// reservation level. Unspent budget returns to deposits.
inline void consumption_market(EconomyState& s) {
  const auto& p = s.params;
  const int n_c = static_cast<int>(s.cfirms.size());
  s.step_spending = 0.0;
  for (auto& h : s.households) {
    const double budget =
        s.consumption_boost * (p.propensity_income * h.income + p.propensity_wealth * h.deposits);
    double spent = 0.0;
    if (budget > kMoneyEps) {
      s.rng.sample_distinct(n_c, p.search_depth, s.visit_buf);
      s.price_order_buf.clear();
      for (int idx : s.visit_buf) {
        const double perceived =
            s.cfirms[idx].price *
            s.rng.uniform(1.0 - kPricePerceptionNoise, 1.0 + kPricePerceptionNoise);
        s.price_order_buf.emplace_back(perceived, idx);
      }
      std::stable_sort(s.price_order_buf.begin(), s.price_order_buf.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });

      const double reservation_price = kReservationPriceMultiple * s.avg_price;
      double remaining = budget;
      for (const auto& [price, idx] : s.price_order_buf) {
        if (remaining <= kMoneyEps) break;
        if (price > reservation_price) break;  // sorted: everything after is dearer
        auto& f = s.cfirms[idx];
        const double attempted = remaining / f.price;
        f.demand += attempted;
        const double take = std::min(attempted, f.remaining_stock);
        if (take > 0.0) {
          const double cost = take * f.price;
          f.remaining_stock -= take;
          f.sales += take;
          f.revenue += cost;
          f.assets += cost;
          remaining -= cost;
          spent += cost;
        }
      }
    }
    h.deposits += h.income - spent;
    if (h.is_capitalist) h.income = 0.0;  // pending dividends are now banked
    s.step_spending += spent;
  }
  s.bank.total_deposits = 0.0;
  for (const auto& h : s.households) s.bank.total_deposits += h.deposits;
}

// Sales-weighted mean of C-firm prices over the step; unweighted mean when
// nothing was sold.
inline double average_price(const EconomyState& s) {
  double weighted = 0.0, total_sales = 0.0, plain = 0.0;
  for (const auto& f : s.cfirms) {
    weighted += f.price * f.sales;
    total_sales += f.sales;
    plain += f.price;
  }
  if (total_sales > 0.0) return weighted / total_sales;
  return plain / static_cast<double>(s.cfirms.size());
}

inline double average_kprice(const EconomyState& s) {
  double weighted = 0.0, total_sales = 0.0, plain = 0.0;
  for (const auto& k : s.kfirms) {
    weighted += k.price * k.sales;
    total_sales += k.sales;
    plain += k.price;
  }
  if (total_sales > 0.0) return weighted / total_sales;
  return plain / static_cast<double>(s.kfirms.size());
}

// Nominal GDP: value of C-goods plus K-goods sold this step. Real GDP
// deflates by the price index.
inline std::pair<double, double> gdp(const EconomyState& s) {
  double nominal = 0.0;
  for (const auto& f : s.cfirms) nominal += f.revenue;
  for (const auto& k : s.kfirms) nominal += k.revenue;
  return {nominal, nominal / s.price_index};
}

// Phase 7: profits, dividends, debt service, bankruptcy and entry. Also
// fixes this step's market averages, price index and GDP, and snapshots the
// per-firm record before entrants replace bankrupt firms.
inline void settle_accounting(EconomyState& s) {
  const auto& p = s.params;

  s.avg_price = average_price(s);
  s.price_index = s.avg_price / s.base_price;
  s.avg_kprice = average_kprice(s);

  double total_dividends = 0.0;
  for (auto& f : s.cfirms) {
    const double wage_bill = p.wage * f.workforce;
    f.assets -= wage_bill;
    const double instalments = detail::pay_instalments(s, f.loans, f.assets);
    const double profit_before_div =
        f.revenue - wage_bill - f.investment_spend - instalments;
    const double dividends = p.dividend_rate * std::max(profit_before_div, 0.0);
    f.assets -= dividends;
    total_dividends += dividends;
    f.profit = (profit_before_div - dividends) / s.price_index;
  }
  for (auto& k : s.kfirms) {
    const double wage_bill = p.wage * k.workforce;
    k.assets -= wage_bill;
    const double instalments = detail::pay_instalments(s, k.loans, k.assets);
    const double profit_before_div = k.revenue - wage_bill - instalments;
    const double dividends = p.dividend_rate * std::max(profit_before_div, 0.0);
    k.assets -= dividends;
    total_dividends += dividends;
  }

  const double share = total_dividends / p.num_capitalists;
  for (auto& h : s.households) {
    if (h.is_capitalist) h.income = share;
  }

  // Snapshot the step before any entrant replacement.
  auto& rec = s.record;
  rec.reset(s.cfirms.size());
  for (std::size_t i = 0; i < s.cfirms.size(); ++i) {
    const auto& f = s.cfirms[i];
    rec.price[i] = f.price;
    rec.sales[i] = f.sales;
    rec.output[i] = f.output;
    rec.demand[i] = f.demand;
    rec.profit[i] = f.profit;
    rec.assets[i] = f.assets;
    rec.revenue[i] = f.revenue;
    rec.bankrupt[i] = f.assets <= 0.0;
    rec.employment += f.workforce;
  }
  for (const auto& k : s.kfirms) rec.employment += k.workforce;

  const auto [nominal, real] = gdp(s);
  s.nominal_gdp = nominal;
  s.real_gdp = real;

  // Bankruptcy and one-for-one entry. The bank absorbs the dead firm's
  // overdraft and writes off its loans; the entrant's equity comes out of
  // capitalist deposits (bank equity covers any shortfall), so exit/entry
  // never creates money.
  double incumbent_assets = 0.0, incumbent_capital = 0.0;
  int incumbents = 0;
  for (const auto& f : s.cfirms) {
    if (f.assets > 0.0) {
      incumbent_assets += f.assets;
      incumbent_capital += f.capital;
      ++incumbents;
    }
  }
  // Entrant scale floors at half the initial calibration so a bankruptcy
  // wave cannot shrink successive entrants geometrically to nothing.
  const double c_target = detail::init_cfirm_target(p);
  const double entrant_assets =
      std::max(0.5 * detail::init_cfirm_assets(p),
               incumbents > 0 ? p.entrant_asset_fraction * incumbent_assets / incumbents : 0.0);
  // Entrants restart between half and the full initial scale: large enough
  // to rebuild quickly, small enough that re-entry is not an investment
  // spike.
  const double init_capital = c_target / p.capital_productivity;
  const double entrant_capital =
      std::clamp(incumbents > 0 ? p.entrant_asset_fraction * incumbent_capital / incumbents : 0.0,
                 0.5 * init_capital, init_capital);
  for (std::size_t i = 0; i < s.cfirms.size(); ++i) {
    if (!rec.bankrupt[i]) continue;
    auto& f = s.cfirms[i];
    f.bankrupt_flag = true;
    for (const auto& loan : f.loans) {
      const double writeoff = loan.remaining_principal();
      s.bank.outstanding_loans -= writeoff;
      s.bank.equity -= writeoff;
      s.step_writeoffs += writeoff;
    }
    f.loans.clear();
    s.bank.equity += f.assets;  // negative residual: the bank ate the overdraft
    for (auto& h : s.households) {
      if (h.employer == static_cast<int>(i)) h.employer = kNoFirm;
    }
    double still_needed = entrant_assets;
    const double share = entrant_assets / p.num_capitalists;
    for (auto& h : s.households) {
      if (!h.is_capitalist) continue;
      const double contribution = std::min(h.deposits, share);
      h.deposits -= contribution;
      still_needed -= contribution;
    }
    s.bank.equity -= still_needed;  // capitalists short: bank funds the rest
    f.assets = entrant_assets;
    f.capital = entrant_capital;
    f.workforce = 0;
    f.price = s.avg_price;
    // Seed a neutral operating point: entrants restart at no more than the
    // typical initial scale even when they inherit a large capital stock.
    f.target_output = std::min(p.capital_productivity * f.capital, c_target);
    f.output = f.target_output;
    f.demand = f.target_output;
    f.sales = f.target_output;
    f.remaining_stock = 0.0;
    f.revenue = 0.0;
    f.investment_spend = 0.0;
    f.profit = 0.0;
  }

  // Insolvent K-firms are recapitalized the same way; without an exit path
  // a loss-making K-firm would roll ever-growing wage loans forever.
  double k_incumbent_assets = 0.0, k_incumbent_target = 0.0;
  int k_incumbents = 0;
  for (const auto& k : s.kfirms) {
    if (k.assets > 0.0) {
      k_incumbent_assets += k.assets;
      k_incumbent_target += k.target_output;
      ++k_incumbents;
    }
  }
  const double k_target = detail::init_kfirm_target(p);
  const double k_entrant_assets =
      std::max(0.5 * detail::init_kfirm_assets(p),
               k_incumbents > 0 ? p.entrant_asset_fraction * k_incumbent_assets / k_incumbents
                                : 0.0);
  const double k_entrant_target =
      std::max(0.5 * k_target, k_incumbents > 0
                                   ? p.entrant_asset_fraction * k_incumbent_target / k_incumbents
                                   : 0.0);
  const int n_c = static_cast<int>(s.cfirms.size());
  for (std::size_t i = 0; i < s.kfirms.size(); ++i) {
    auto& k = s.kfirms[i];
    if (k.assets > 0.0) continue;
    for (const auto& loan : k.loans) {
      const double writeoff = loan.remaining_principal();
      s.bank.outstanding_loans -= writeoff;
      s.bank.equity -= writeoff;
      s.step_writeoffs += writeoff;
    }
    k.loans.clear();
    s.bank.equity += k.assets;
    const int unified_id = n_c + static_cast<int>(i);
    for (auto& h : s.households) {
      if (h.employer == unified_id) h.employer = kNoFirm;
    }
    double still_needed = k_entrant_assets;
    const double share = k_entrant_assets / p.num_capitalists;
    for (auto& h : s.households) {
      if (!h.is_capitalist) continue;
      const double contribution = std::min(h.deposits, share);
      h.deposits -= contribution;
      still_needed -= contribution;
    }
    s.bank.equity -= still_needed;
    k.assets = k_entrant_assets;
    k.workforce = 0;
    k.price = s.avg_kprice;
    k.target_output = k_entrant_target;
    k.output = k_entrant_target;
    k.demand = k_entrant_target;
    k.sales = 0.0;
    k.inventory = 0.0;
    k.available = k_entrant_target;
    k.revenue = 0.0;
  }

  s.bank.total_deposits = 0.0;
  for (const auto& h : s.households) s.bank.total_deposits += h.deposits;
}

// Runs one full step:
//   decisions -> labour -> credit -> capital -> production -> consumption
//   -> settlement -> aggregates.
// Throws IntegrityError if money conservation or market clearing breaks.
inline MetricsFrame step_economy(EconomyState& s, std::span<const FirmDecision> decisions) {
  const double money_before = detail::total_money(s);
  s.step_loans_granted = 0.0;
  s.step_principal_repaid = 0.0;
  s.step_writeoffs = 0.0;

  apply_decisions(s, decisions);
  labour_market(s);
  credit_market(s);
  capital_market(s);
  production(s);
  consumption_market(s);
  settle_accounting(s);

  const double money_after = detail::total_money(s);
  const double expected_delta =
      s.step_loans_granted - s.step_principal_repaid - s.step_writeoffs;
  const double mismatch = (money_after - money_before) - expected_delta;
  if (std::abs(mismatch) > 1e-6 * std::max(1.0, std::abs(money_after))) {
    throw IntegrityError("money conservation broken at step " + std::to_string(s.step + 1) +
                         ": mismatch " + std::to_string(mismatch));
  }
  double c_revenue = 0.0;
  for (double r : s.record.revenue) c_revenue += r;
  if (std::abs(c_revenue - s.step_spending) > 1e-9 * std::max(1.0, s.step_spending)) {
    throw IntegrityError("market clearing broken at step " + std::to_string(s.step + 1));
  }

  s.step += 1;
  MetricsFrame frame;
  frame.t = s.step;
  frame.price = s.record.price;
  frame.sales = s.record.sales;
  frame.output = s.record.output;
  frame.demand = s.record.demand;
  frame.profit = s.record.profit;
  frame.assets = s.record.assets;
  frame.bankrupt = s.record.bankrupt;
  frame.reward.assign(s.cfirms.size(), std::numeric_limits<double>::quiet_NaN());
  frame.avg_price = s.avg_price;
  frame.nominal_gdp = s.nominal_gdp;
  frame.real_gdp = s.real_gdp;
  frame.price_index = s.price_index;
  frame.employment = s.record.employment;
  frame.consumption_spending = s.step_spending;
  return frame;
}

// --- snapshot export/import -------------------------------------------------

inline constexpr int kSnapshotVersion = 1;

inline json to_json(const Loan& l) {
  return json{{"principal_instalment", l.principal_instalment}, {"steps_left", l.steps_left}};
}

inline json snapshot_to_json(const EconomyState& s) {
  json j;
  j["format"] = "rmabm-economy-snapshot";
  j["version"] = kSnapshotVersion;
  j["params"] = to_json(s.params);
  j["step"] = s.step;
  j["avg_price"] = s.avg_price;
  j["avg_kprice"] = s.avg_kprice;
  j["base_price"] = s.base_price;
  j["price_index"] = s.price_index;
  j["nominal_gdp"] = s.nominal_gdp;
  j["real_gdp"] = s.real_gdp;
  j["consumption_boost"] = s.consumption_boost;
  j["rng"] = s.rng.serialize();
  j["bank"] = json{{"total_deposits", s.bank.total_deposits},
                   {"outstanding_loans", s.bank.outstanding_loans},
                   {"equity", s.bank.equity}};
  auto loans_json = [](const std::vector<Loan>& loans) {
    json arr = json::array();
    for (const auto& l : loans) arr.push_back(to_json(l));
    return arr;
  };
  json hh = json::array();
  for (const auto& h : s.households) {
    hh.push_back(json{{"id", h.id},
                      {"is_capitalist", h.is_capitalist},
                      {"employer", h.employer},
                      {"income", h.income},
                      {"deposits", h.deposits}});
  }
  j["households"] = std::move(hh);
  json cf = json::array();
  for (const auto& f : s.cfirms) {
    cf.push_back(json{{"id", f.id},
                      {"price", f.price},
                      {"target_output", f.target_output},
                      {"output", f.output},
                      {"demand", f.demand},
                      {"sales", f.sales},
                      {"assets", f.assets},
                      {"capital", f.capital},
                      {"workforce", f.workforce},
                      {"loans", loans_json(f.loans)},
                      {"profit", f.profit},
                      {"bankrupt_flag", f.bankrupt_flag}});
  }
  j["cfirms"] = std::move(cf);
  json kf = json::array();
  for (const auto& k : s.kfirms) {
    kf.push_back(json{{"id", k.id},
                      {"price", k.price},
                      {"output", k.output},
                      {"inventory", k.inventory},
                      {"workforce", k.workforce},
                      {"assets", k.assets},
                      {"target_output", k.target_output},
                      {"demand", k.demand},
                      {"sales", k.sales},
                      {"available", k.available},
                      {"loans", loans_json(k.loans)}});
  }
  j["kfirms"] = std::move(kf);
  return j;
}

inline EconomyState snapshot_from_json(const json& j) {
  if (!j.contains("format") || j["format"] != "rmabm-economy-snapshot") {
    throw IoError("not an economy snapshot");
  }
  if (j.value("version", -1) != kSnapshotVersion) {
    throw IoError("unsupported snapshot version");
  }
  EconomyState s;
  s.params = model_params_from_json(j.at("params"), "params");
  s.step = j.at("step").get<long long>();
  s.avg_price = j.at("avg_price").get<double>();
  s.avg_kprice = j.at("avg_kprice").get<double>();
  s.base_price = j.at("base_price").get<double>();
  s.price_index = j.at("price_index").get<double>();
  s.nominal_gdp = j.at("nominal_gdp").get<double>();
  s.real_gdp = j.at("real_gdp").get<double>();
  s.consumption_boost = j.at("consumption_boost").get<double>();
  s.rng.deserialize(j.at("rng").get<std::string>());
  s.bank.total_deposits = j.at("bank").at("total_deposits").get<double>();
  s.bank.outstanding_loans = j.at("bank").at("outstanding_loans").get<double>();
  s.bank.equity = j.at("bank").at("equity").get<double>();
  auto loans_from = [](const json& arr) {
    std::vector<Loan> loans;
    for (const auto& l : arr) {
      loans.push_back(Loan{l.at("principal_instalment").get<double>(), l.at("steps_left").get<int>()});
    }
    return loans;
  };
  for (const auto& hj : j.at("households")) {
    HouseholdState h;
    h.id = hj.at("id").get<int>();
    h.is_capitalist = hj.at("is_capitalist").get<bool>();
    h.employer = hj.at("employer").get<int>();
    h.income = hj.at("income").get<double>();
    h.deposits = hj.at("deposits").get<double>();
    s.households.push_back(h);
  }
  for (const auto& fj : j.at("cfirms")) {
    CFirmState f;
    f.id = fj.at("id").get<int>();
    f.price = fj.at("price").get<double>();
    f.target_output = fj.at("target_output").get<double>();
    f.output = fj.at("output").get<double>();
    f.demand = fj.at("demand").get<double>();
    f.sales = fj.at("sales").get<double>();
    f.assets = fj.at("assets").get<double>();
    f.capital = fj.at("capital").get<double>();
    f.workforce = fj.at("workforce").get<int>();
    f.loans = loans_from(fj.at("loans"));
    f.profit = fj.at("profit").get<double>();
    f.bankrupt_flag = fj.at("bankrupt_flag").get<bool>();
    s.cfirms.push_back(std::move(f));
  }
  for (const auto& kj : j.at("kfirms")) {
    KFirmState k;
    k.id = kj.at("id").get<int>();
    k.price = kj.at("price").get<double>();
    k.output = kj.at("output").get<double>();
    k.inventory = kj.at("inventory").get<double>();
    k.workforce = kj.at("workforce").get<int>();
    k.assets = kj.at("assets").get<double>();
    k.target_output = kj.at("target_output").get<double>();
    k.demand = kj.at("demand").get<double>();
    k.sales = kj.at("sales").get<double>();
    k.available = kj.at("available").get<double>();
    k.loans = loans_from(kj.at("loans"));
    s.kfirms.push_back(std::move(k));
  }
  s.record.reset(s.cfirms.size());
  return s;
}

}  // namespace rmabm
