describe("checkout", () => {
  it("pays", () => {
    cy.visit("/cart");
    cy.get(".line-item").should("have.length", 2);
    cy.get("#coupon").type("SAVE10");
    cy.contains("Apply").click();
    cy.get("#total").should("contain", "$18.00");
    cy.get("#pay").click();
  });
});
