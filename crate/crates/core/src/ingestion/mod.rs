//! Price panels, FX conversion and market closing clocks.

mod clock;
mod fx;
mod prices;

pub use clock::{load_metadata, parse_metadata, render_metadata, AuctionPolicy, ClockEpoch, MarketClock, MarketMeta};
pub use fx::{convert_to_usd, convert_to_usd_lenient, load_fx, FxSeries, QuoteSide};
pub use prices::{load_prices, read_prices, write_prices, PriceObs, PriceSchema, PriceSeries};
