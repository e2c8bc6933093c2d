//! Parse hourly observations and aggregate them to local daily means.

use airgam::ingest::{aggregate_daily, parse_observations, parse_stations, AggregateConfig, Field};

const STATIONS: &str = "station_id,region,class_label,lat,lon\nZH1,EasternSwitzerland,High Traffic,47.37,8.54\n";

fn main() -> airgam::Result<()> {
    let mut csv = String::from("station_id,timestamp,no2,ws,wd,t\n");
    for day in 1..=3 {
        for hour in 0..24 {
            let no2 = 20.0 + hour as f64 + day as f64;
            let wd = if hour % 2 == 0 { 350.0 } else { 10.0 };
            csv.push_str(&format!(
                "ZH1,2020-03-0{day}T{hour:02}:00:00Z,{no2},2.5,{wd},{}\n",
                5 + day
            ));
        }
    }
    // a malformed row is reported and skipped
    csv.push_str("ZH1,not-a-time,1,1,1,1\n");

    let stations = parse_stations(STATIONS.as_bytes())?;
    let parsed = parse_observations(csv.as_bytes())?;
    println!(
        "{} stations, {} hourly rows, {} row errors",
        stations.len(),
        parsed.observations.len(),
        parsed.row_errors.len()
    );

    // local days in UTC+1
    let config = AggregateConfig {
        coverage_threshold: 0.75,
        utc_offset_hours: 1,
    };
    for series in aggregate_daily(&parsed.observations, &config)? {
        for row in &series.rows {
            println!(
                "{} {}  NO2 {:>6}  WD {:>6}  coverage {:.2}",
                series.station_id,
                row.date,
                row.get(Field::No2).map_or("-".into(), |v| format!("{v:.2}")),
                row.get(Field::Wd).map_or("-".into(), |v| format!("{v:.1}")),
                row.coverage[Field::No2.index()],
            );
        }
    }
    Ok(())
}
