//! Load a long-format CSV with dated periods and a missing cell, then write it back.

use multiscm::panel::{load_panel, write_panel, TreatmentConfig};

const DATA: &str = "\
unit,period,outcome,value
flint,2019-01-01,lead,5.1
flint,2019-02-01,lead,4.8
flint,2019-03-01,lead,
flint,2019-04-01,lead,7.9
flint,2019-05-01,lead,8.3
lansing,2019-01-01,lead,3.0
lansing,2019-02-01,lead,3.2
lansing,2019-03-01,lead,3.1
lansing,2019-04-01,lead,3.4
lansing,2019-05-01,lead,3.3
saginaw,2019-05-01,lead,5.0
saginaw,2019-04-01,lead,4.9
saginaw,2019-03-01,lead,5.3
saginaw,2019-02-01,lead,5.2
saginaw,2019-01-01,lead,5.5
";

fn main() -> multiscm::Result<()> {
    let config = TreatmentConfig::from_toml_str("treated_unit = \"flint\"\nt0 = \"2019-03-01\"\n")?;
    let panel = load_panel(DATA.as_bytes(), &config)?;
    println!(
        "{} units, {} periods, t0 = {}, complete = {}",
        panel.n_units(),
        panel.n_periods(),
        panel.t0(),
        panel.is_complete()
    );
    println!("periods: {:?}", panel.periods());

    let mut out = Vec::new();
    write_panel(&panel, &mut out)?;
    let again = load_panel(out.as_slice(), &config)?;
    assert_eq!(again, panel);
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
