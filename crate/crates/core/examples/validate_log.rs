//! Validating read of a small transaction log: bad rows are reported with
//! their line numbers and the good ones are kept. Products are then grouped
//! by active ingredient.
//!
//! cargo run --example validate_log

use std::collections::BTreeSet;

use supplyflex::ingest::{group_substitutables, parse_catalog, parse_rules, read_transactions, ParseOptions};

const CATALOG: &str = "entity_id,role
M1,manufacturer
D1,distributor
D2,distributor
H1,final-buyer
";

const RULES: &str = "product_code,ingredient,form,strength
CIS10,cisplatin,vial,10mg
CIS50,cisplatin,vial,50mg
VIN1,vincristine,vial,1mg
";

const TRANSACTIONS: &str = "date,seller_id,buyer_id,product_code,quantity
2013-01-02,M1,D1,CIS10,40
2013-01-02,M1,D2,CIS50,-5
2013-01-03,D1,D2,CIS10,10
2013-01-04,D2,H1,CIS10,8
2013-01-04,D2,X9,VIN1,3
2013-13-01,D1,H1,CIS10,2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = parse_catalog(CATALOG.as_bytes())?;
    let rules = parse_rules(RULES.as_bytes())?;
    let report = read_transactions(TRANSACTIONS.as_bytes(), &catalog, &ParseOptions::default())?;
    println!("{} rows read, {} accepted", report.rows, report.log.len());
    for row in &report.errors {
        println!("  {}", row.error);
    }

    let products: BTreeSet<String> = rules.keys().cloned().collect();
    for class in group_substitutables(&products, &rules)? {
        let members: Vec<&str> = class.members.iter().map(String::as_str).collect();
        println!("class {}: {}", class.id, members.join(", "));
    }
    Ok(())
}
