describe("navigation", () => {
  it("follows the pricing link", () => {
    cy.visit("/");
    cy.contains("Pricing").click();
    cy.reload();
    cy.contains("Monthly plan");
  });
});
