use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{
    Day, EntityCatalog, IngestError, Role, SubstitutionRule, Transaction, TransactionLog,
};

const TX_HEADER: [&str; 5] = ["date", "seller_id", "buyer_id", "product_code", "quantity"];
const CATALOG_HEADER: [&str; 2] = ["entity_id", "role"];
const RULES_HEADER: [&str; 4] = ["product_code", "ingredient", "form", "strength"];

/// Optional constraints applied while reading a transaction log.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Accepted dates, `start <= date < end`.
    pub window: Option<(Day, Day)>,
}

/// A rejected row.
#[derive(Debug)]
pub struct RowError {
    pub line: u64,
    pub error: IngestError,
}

/// Outcome of a validating read: every well-formed row plus every rejected one.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub log: TransactionLog,
    pub rows: u64,
    pub errors: Vec<RowError>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let ok = found.len() == expected.len()
        && found.iter().zip(expected).all(|(a, b)| a.trim() == *b);
    if ok {
        Ok(())
    } else {
        Err(IngestError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(src)
}

/// Reads every row, collecting rejected rows instead of stopping at the
/// first one. The returned log is sorted by date (stable).
pub fn read_transactions<R: Read>(
    src: R,
    catalog: &EntityCatalog,
    options: &ParseOptions,
) -> Result<ValidationReport, IngestError> {
    let mut rdr = reader(src);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Ok(ValidationReport::default());
    }
    check_header(&header, &TX_HEADER)?;

    let mut report = ValidationReport::default();
    let mut record = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.errors.push(RowError {
                    line,
                    error: IngestError::Malformed {
                        line,
                        message: e.to_string(),
                    },
                });
                continue;
            }
        }
        report.rows += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, line, catalog, options, &mut report.log) {
            Ok(tx) => report.log.transactions.push(tx),
            Err(error) => report.errors.push(RowError { line, error }),
        }
    }
    report.log.sort_by_date();
    Ok(report)
}

fn parse_row(
    record: &csv::ByteRecord,
    line: u64,
    catalog: &EntityCatalog,
    options: &ParseOptions,
    log: &mut TransactionLog,
) -> Result<Transaction, IngestError> {
    let malformed = |message: &str| IngestError::Malformed {
        line,
        message: message.to_string(),
    };
    if record.len() != 5 {
        return Err(malformed(&format!("expected 5 fields, found {}", record.len())));
    }
    let field = |i: usize| -> Result<&str, IngestError> {
        std::str::from_utf8(&record[i])
            .map(str::trim)
            .map_err(|_| malformed("invalid UTF-8"))
    };
    let date = Day::parse_iso(field(0)?).ok_or_else(|| malformed("date is not YYYY-MM-DD"))?;
    let entity = |name: &str| {
        catalog.id(name).ok_or_else(|| IngestError::UnknownEntity {
            line,
            entity: name.to_string(),
        })
    };
    let seller_name = field(1)?;
    let seller = entity(seller_name)?;
    let buyer = entity(field(2)?)?;
    let product_code = field(3)?;
    if product_code.is_empty() {
        return Err(malformed("empty product code"));
    }
    let qty_text = field(4)?;
    let quantity: i64 = qty_text
        .parse()
        .map_err(|_| malformed("quantity is not an integer"))?;
    if quantity <= 0 {
        return Err(IngestError::NonPositiveQuantity { line });
    }
    if seller == buyer {
        return Err(IngestError::SelfShipment {
            line,
            entity: seller_name.to_string(),
        });
    }
    if let Some((start, end)) = options.window {
        if date < start || date >= end {
            return Err(IngestError::OutOfWindow { line, date });
        }
    }
    Ok(Transaction {
        date,
        seller,
        buyer,
        product: log.products.intern(product_code),
        quantity: quantity as u64,
    })
}

/// Strict parse: the first rejected row aborts with its error.
pub fn parse_transactions<R: Read>(
    src: R,
    catalog: &EntityCatalog,
) -> Result<TransactionLog, IngestError> {
    let report = read_transactions(src, catalog, &ParseOptions::default())?;
    match report.errors.into_iter().next() {
        Some(row) => Err(row.error),
        None => Ok(report.log),
    }
}

pub fn write_transactions<W: Write>(
    log: &TransactionLog,
    catalog: &EntityCatalog,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TX_HEADER)?;
    let mut qty = String::new();
    for t in &log.transactions {
        qty.clear();
        use std::fmt::Write as _;
        let _ = write!(qty, "{}", t.quantity);
        w.write_record([
            t.date.to_string().as_str(),
            catalog.name(t.seller),
            catalog.name(t.buyer),
            log.products.code(t.product),
            qty.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_catalog<R: Read>(src: R) -> Result<EntityCatalog, IngestError> {
    let mut rdr = reader(src);
    let header = rdr.headers()?.clone();
    let mut catalog = EntityCatalog::new();
    if header.is_empty() {
        return Ok(catalog);
    }
    check_header(&header, &CATALOG_HEADER)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(IngestError::Malformed {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let role = Role::parse(&rec[1]).ok_or_else(|| IngestError::UnknownRole {
            line,
            role: rec[1].to_string(),
        })?;
        let name = rec[0].trim();
        if catalog.id(name).is_some() {
            return Err(IngestError::DuplicateEntity(name.to_string()));
        }
        catalog.insert(name, role)?;
    }
    Ok(catalog)
}

pub fn write_catalog<W: Write>(catalog: &EntityCatalog, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CATALOG_HEADER)?;
    for (_, name, role) in catalog.iter() {
        w.write_record([name, role.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_rules<R: Read>(src: R) -> Result<BTreeMap<String, SubstitutionRule>, IngestError> {
    let mut rdr = reader(src);
    let header = rdr.headers()?.clone();
    let mut rules = BTreeMap::new();
    if header.is_empty() {
        return Ok(rules);
    }
    check_header(&header, &RULES_HEADER)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(IngestError::Malformed {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        rules.insert(
            rec[0].trim().to_string(),
            SubstitutionRule {
                ingredient: rec[1].trim().to_string(),
                form: rec[2].trim().to_string(),
                strength: rec[3].trim().to_string(),
            },
        );
    }
    Ok(rules)
}

pub fn write_rules<W: Write>(
    rules: &BTreeMap<String, SubstitutionRule>,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RULES_HEADER)?;
    for (code, r) in rules {
        w.write_record([code.as_str(), &r.ingredient, &r.form, &r.strength])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> EntityCatalog {
        let mut c = EntityCatalog::new();
        c.insert("M1", Role::Manufacturer).unwrap();
        c.insert("D1", Role::Distributor).unwrap();
        c.insert("F1", Role::FinalBuyer).unwrap();
        c
    }

    #[test]
    fn empty_file_gives_empty_log() {
        let log = parse_transactions("".as_bytes(), &catalog()).unwrap();
        assert!(log.is_empty());
        let log = parse_transactions(
            "date,seller_id,buyer_id,product_code,quantity\n".as_bytes(),
            &catalog(),
        )
        .unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn one_row() {
        let src = "date,seller_id,buyer_id,product_code,quantity\n2012-03-01,M1,D1,OXY-10,5\n";
        let c = catalog();
        let log = parse_transactions(src.as_bytes(), &c).unwrap();
        assert_eq!(log.len(), 1);
        let t = log.transactions[0];
        assert_eq!(t.quantity, 5);
        assert_eq!(c.name(t.seller), "M1");
        assert_eq!(log.products.code(t.product), "OXY-10");
        assert_eq!(t.date, Day::from_ymd(2012, 3, 1).unwrap());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let src = "date,seller_id,buyer_id,product_code,quantity\n\
                   2012-03-01,M1,D1,OXY-10,5\n\
                   2012-03-02,M1,D1,OXY-10,zero\n\
                   2012-03-02,M1,XX,OXY-10,1\n\
                   2012-03-02,M1,D1,OXY-10,0\n\
                   2012-03-02,D1,D1,OXY-10,3\n";
        let report = read_transactions(src.as_bytes(), &catalog(), &ParseOptions::default()).unwrap();
        assert_eq!(report.rows, 5);
        assert_eq!(report.log.len(), 1);
        let lines: Vec<u64> = report.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
        assert!(matches!(report.errors[1].error, IngestError::UnknownEntity { .. }));
        assert!(matches!(report.errors[2].error, IngestError::NonPositiveQuantity { .. }));
        assert!(matches!(report.errors[3].error, IngestError::SelfShipment { .. }));
        assert!(parse_transactions(src.as_bytes(), &catalog()).is_err());
    }

    #[test]
    fn window_is_enforced() {
        let src = "date,seller_id,buyer_id,product_code,quantity\n2013-01-01,M1,D1,OXY-10,5\n";
        let opts = ParseOptions {
            window: Some((Day::from_ymd(2012, 1, 1).unwrap(), Day::from_ymd(2013, 1, 1).unwrap())),
        };
        let report = read_transactions(src.as_bytes(), &catalog(), &opts).unwrap();
        assert!(matches!(report.errors[0].error, IngestError::OutOfWindow { .. }));
    }

    #[test]
    fn same_day_rows_keep_input_order() {
        let src = "date,seller_id,buyer_id,product_code,quantity\n\
                   2012-03-02,M1,D1,A,1\n\
                   2012-03-01,M1,D1,B,2\n\
                   2012-03-02,D1,F1,C,3\n\
                   2012-03-01,D1,F1,D,4\n";
        let log = parse_transactions(src.as_bytes(), &catalog()).unwrap();
        let got: Vec<u64> = log.transactions.iter().map(|t| t.quantity).collect();
        // independent oracle: insertion sort keyed on date, only moving strictly greater keys
        let mut oracle: Vec<(i32, u64)> = vec![(2, 1), (1, 2), (2, 3), (1, 4)];
        for i in 1..oracle.len() {
            let mut j = i;
            while j > 0 && oracle[j - 1].0 > oracle[j].0 {
                oracle.swap(j - 1, j);
                j -= 1;
            }
        }
        assert_eq!(got, oracle.iter().map(|o| o.1).collect::<Vec<_>>());
    }

    #[test]
    fn catalog_round_trip() {
        let c = catalog();
        let mut buf = Vec::new();
        write_catalog(&c, &mut buf).unwrap();
        let back = parse_catalog(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.role(back.id("F1").unwrap()), Role::FinalBuyer);
    }

    #[test]
    fn catalog_rejects_unknown_role() {
        let src = "entity_id,role\nX,retailer\n";
        assert!(matches!(parse_catalog(src.as_bytes()), Err(IngestError::UnknownRole { line: 2, .. })));
    }
}
